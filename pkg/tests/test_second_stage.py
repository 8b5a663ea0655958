import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import tiny_instance
from drstaff import model
from drstaff.second_stage import (Scenario, check_scenario, membership, recourse_bruteforce,
                                  recourse_dual, recourse_lp, recourse_values)

COSTS = model.CostParams(100.0, 130.0, 400.0, 50.0)


def single(pools):
    return tiny_instance(J=1, pools=pools, d_hi=10, w_hi=5, y_hi=5, costs=COSTS)


def test_no_pool_shortage_hires_temporaries():
    inst = single(())
    sc = Scenario((0,), (), (3,))
    res = recourse_lp(inst, ((0,), ()), sc)
    assert res.value == 1200 and res.x[0] == 3 and res.e[0] == 0
    assert recourse_dual(inst, ((0,), ()), sc) == 1200
    assert recourse_bruteforce(inst, ((0,), ()), sc, 10) == 1200


def test_pool_covers_before_temporaries():
    inst = single(((0,),))
    sc = Scenario((0,), (2,), (3,))
    res = recourse_lp(inst, ((0,), (2,)), sc)
    assert res.value == 400 and res.z[0, 0] == 2 and res.x[0] == 1
    assert recourse_dual(inst, ((0,), (2,)), sc) == 400
    assert recourse_bruteforce(inst, ((0,), (2,)), sc, 10) == 400


def test_surplus_without_idle_benefit_is_free():
    inst = tiny_instance(J=2, costs=model.CostParams(100.0, 130.0, 400.0, 0.0))
    sc = Scenario((4, 4), (3,), (1, 2))
    assert recourse_lp(inst, ((4, 4), (3,)), sc).value == 0
    assert recourse_bruteforce(inst, ((4, 4), (3,)), sc, 6) == 0


def scenarios(J_max=3, I_max=2):
    @st.composite
    def build(draw):
        J = draw(st.integers(1, J_max))
        I = draw(st.integers(0, I_max))
        pools = tuple(tuple(sorted(draw(st.sets(st.integers(0, J - 1), min_size=1))))
                      for _ in range(I))
        inst = tiny_instance(J=J, pools=pools, d_hi=8, w_hi=4, y_hi=3)
        w = tuple(draw(st.integers(0, 4)) for _ in range(J))
        y = tuple(draw(st.integers(0, 3)) for _ in range(I))
        sc = Scenario(tuple(draw(st.integers(0, v)) for v in w),
                      tuple(draw(st.integers(0, v)) for v in y),
                      tuple(draw(st.integers(0, 8)) for _ in range(J)))
        return inst, (w, y), sc
    return build()


@given(scenarios())
def test_three_routes_agree(case):
    inst, staffing, sc = case
    lp = recourse_lp(inst, staffing, sc).value
    assert lp == pytest.approx(recourse_dual(inst, staffing, sc), abs=1e-9)
    assert lp == pytest.approx(recourse_bruteforce(inst, staffing, sc, 8), abs=1e-9)


@given(scenarios())
def test_batch_matches_lp(case):
    inst, staffing, sc = case
    vals, temps = recourse_values(inst, np.array([sc.w_show]), np.array([sc.y_show]).reshape(1, -1),
                                  np.array([sc.demand]))
    res = recourse_lp(inst, staffing, sc)
    assert vals[0] == pytest.approx(res.value, abs=1e-9)
    assert temps[0] == res.x.sum()


@given(scenarios(), st.integers(0, 2))
def test_monotone_in_pool_showups(case, extra):
    # more pool nurses can only lower the recourse cost
    inst, (w, y), sc = case
    if not y:
        return
    y2 = tuple(v + extra for v in y)
    sc2 = Scenario(sc.w_show, tuple(v + extra for v in sc.y_show), sc.demand)
    assert recourse_lp(inst, (w, y2), sc2).value <= recourse_lp(inst, (w, y), sc).value + 1e-9


@given(scenarios())
def test_monotone_in_demand(case):
    inst, staffing, sc = case
    d2 = tuple(min(v + 1, 8) for v in sc.demand)
    hi = recourse_lp(inst, staffing, Scenario(sc.w_show, sc.y_show, d2)).value
    assert hi >= recourse_lp(inst, staffing, sc).value - 1e-9


def test_scenario_validation():
    inst = tiny_instance()
    with pytest.raises(ValueError, match="show-ups"):
        check_scenario(inst, ((2, 2), (1,)), Scenario((3, 0), (0,), (1, 1)))
    with pytest.raises(ValueError, match="pool"):
        check_scenario(inst, ((2, 2), (1,)), Scenario((0, 0), (2,), (1, 1)))
    with pytest.raises(ValueError, match="demand"):
        check_scenario(inst, ((2, 2), (1,)), Scenario((0, 0), (0,), (1, 9)))
    with pytest.raises(ValueError, match="dimensions"):
        check_scenario(inst, ((2, 2), (1,)), Scenario((0,), (0,), (1,)))
    with pytest.raises(ValueError, match="cap"):
        recourse_bruteforce(inst, ((2, 2), (1,)), Scenario((0, 0), (0,), (1, 1)), 3)


def test_membership_matrix(fixture_instance):
    M = membership(fixture_instance)
    assert M.shape == (1, 7) and M.all()


def test_fixture_scenario_integral(fixture_instance, rng):
    inst = fixture_instance
    w = tuple(u.staffing_bounds[0] + 3 for u in inst.units)
    y = (6,)
    for _ in range(20):
        sc = Scenario(tuple(int(rng.integers(0, v + 1)) for v in w), (int(rng.integers(0, 7)),),
                      tuple(int(rng.integers(*u.demand_bounds)) for u in inst.units))
        res = recourse_lp(inst, (w, y), sc)
        assert res.value == pytest.approx(recourse_dual(inst, (w, y), sc), abs=1e-9)

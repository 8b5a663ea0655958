import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import tiny_instance
from drstaff import model
from drstaff.ambiguity import (check_all_levels, check_feasibility, condition3_value,
                               construct_distribution, two_point)
from drstaff.evaluate import empirical_moments


def unit_from_history(history, lo, hi, rate=0.9):
    mom = tuple(empirical_moments(np.asarray(history), 2))
    return model.UnitSpec(mom, (lo, hi), (0, 5), model.AttendanceFunction.linear(rate, 0, 5))


@given(st.lists(st.integers(0, 12), min_size=1, max_size=30), st.floats(0.0, 1.0))
def test_empirical_moments_always_representable(history, rate):
    u = unit_from_history(history, 0, 12, rate)
    inst = model.Instance((u,), (), model.CostParams(100, 130, 400, 50))
    rep = check_feasibility(inst, ((3,), ()))
    assert rep.overall and rep.condition3[0] <= 1e-7
    dist = construct_distribution(inst, ((3,), ()))
    assert dist.max_moment_error(inst, ((3,), ())) <= 1e-7


def test_mean_outside_support_fails():
    u = model.UnitSpec((11.0, 125.0), (0, 10), (0, 5), model.AttendanceFunction.linear(0.9, 0, 5))
    inst = model.Instance((u,), (), model.CostParams(100, 130, 400, 50))
    rep = check_feasibility(inst, ((2,), ()))
    assert rep.condition3[0] > 0 and not rep.overall
    assert any("condition 3" in f for f in rep.failures())
    assert check_all_levels(inst)


def test_variance_too_large_for_support():
    # support {0..4} caps the variance at 4
    assert condition3_value(model.UnitSpec((2.0, 4.0 + 5.0), (0, 4), (0, 1),
                                           model.AttendanceFunction.identity(0, 1))) > 0


def test_attendance_above_staffing_fails():
    att = model.AttendanceFunction(0, (0.0, 1.5, 2.0))
    u = model.UnitSpec((3.0, 11.0), (0, 6), (0, 2), att)
    inst = model.Instance((u,), (), model.CostParams(100, 130, 400, 50))
    assert not check_feasibility(inst, ((1,), ())).condition1[0]
    assert check_feasibility(inst, ((2,), ())).condition1[0]
    assert any("level 1" in p for p in check_all_levels(inst))


def test_pool_condition():
    inst = tiny_instance(pool_rate=1.0)
    bad = inst.replace(pools=(model.PoolSpec((0, 1), (0, 2), model.AttendanceFunction(0, (0.0, 1.0, 2.5))),))
    assert not check_feasibility(bad, ((1, 1), (2,))).condition2[0]
    assert any("condition 2" in p for p in check_all_levels(bad))


def test_fixture_feasible_everywhere(fixture_instance):
    assert check_all_levels(fixture_instance) == []
    w = tuple(u.staffing_bounds[0] for u in fixture_instance.units)
    rep = check_feasibility(fixture_instance, (w, (0,)))
    assert rep.overall and rep.failures() == []


def test_construction_on_fixture(fixture_instance):
    w = tuple(u.staffing_bounds[0] + 4 for u in fixture_instance.units)
    dist = construct_distribution(fixture_instance, (w, (7,)))
    assert dist.max_moment_error(fixture_instance, (w, (7,))) <= 1e-7
    for j, u in enumerate(fixture_instance.units):
        m = dist.demand[j]
        assert m.support.min() >= u.demand_bounds[0] and m.support.max() <= u.demand_bounds[1]
        assert (m.probs >= 0).all()


@given(st.floats(0.0, 50.0))
def test_two_point_mean(mean):
    m = two_point(mean)
    assert m.moment(1) == pytest.approx(mean, abs=1e-9)
    assert m.probs.sum() == pytest.approx(1.0)
    assert m.support.max() - m.support.min() <= 1

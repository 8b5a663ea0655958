import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import tiny_instance
from drstaff import adversary as adv
from drstaff import model
from drstaff.adversary import CutCoefficients


def cc(ct, cr, cp, cs=None):
    cp = np.asarray(cp, dtype=float)
    return CutCoefficients(np.asarray(ct, float), np.asarray(cr, float), cp,
                           np.zeros(cp.size) if cs is None else np.asarray(cs, float))


def random_coeffs(rng, J, I):
    return cc(rng.normal(0, 10, J), rng.normal(0, 10, J), np.abs(rng.normal(0, 10, I)))


def enumerate_h(instance, coeffs):
    """Independent maximum: every t, value from the explicit point."""
    best = -np.inf
    for t in itertools.product((0, 1), repeat=instance.J):
        pt = adv.point_from_t(instance, t, coeffs)
        assert adv.membership_violations(instance, pt) == []
        best = max(best, adv.point_value(coeffs, pt))
    return best


seeds = st.integers(0, 2**32 - 1)


def test_zero_coefficients():
    inst = tiny_instance()
    pt = adv.solve_bruteforce(inst, cc([0, 0], [0, 0], [0]))
    assert pt.value == 0 and pt.t == (0, 0)


def test_small_enumerated_cases():
    inst = tiny_instance()
    pt = adv.solve_bruteforce(inst, cc([1, 0], [0, 1], [0]))
    assert pt.t == (1, 0) and pt.value == 2
    pt = adv.closed_one_pool(cc([5, 1], [0, 0], [0]))
    assert pt.value == 6 and pt.t == (1, 1) and pt.s == ((0, 1),)
    pt = adv.closed_one_pool(cc([-1, -2], [0, 0], [10]))
    assert pt.value == 10 and pt.t == (0, 0) and pt.p == (1,)
    for f in (adv.solve_generic, adv.solve_bruteforce):
        assert f(inst, cc([1, 0], [0, 1], [0])).value == 2


def test_disjoint_separable_and_uncovered():
    inst = tiny_instance(J=3, pools=((0,), (1,)))
    c = cc([3, -1, 7], [1, 2, 4], [5, 6])
    pt = adv.closed_disjoint(inst, c)
    one = adv.closed_one_pool(cc([3], [1], [5])).value + adv.closed_one_pool(cc([-1], [2], [6])).value
    assert pt.value == pytest.approx(one + 7)
    assert pt.t[2] == 1


def test_chained_trivial():
    inst = tiny_instance(J=3, pools=model.chain_members(3))
    assert adv.solve_chained(cc([0] * 3, [0] * 3, [0] * 3), inst).value == 0
    pt = adv.solve_chained(cc([0] * 3, [0] * 3, [1, 1, 1]), inst)
    assert pt.value == 3 and pt.t == (0, 0, 0)


@given(seeds, st.integers(1, 8))
def test_one_pool_matches_bruteforce(seed, J):
    rng = np.random.default_rng(seed)
    inst = tiny_instance(J=J, pools=(tuple(range(J)),))
    c = random_coeffs(rng, J, 1)
    ref = adv.solve_bruteforce(inst, c).value
    assert adv.closed_one_pool(c, inst).value == pytest.approx(ref, abs=1e-9)
    assert adv.solve_generic(inst, c).value == pytest.approx(ref, abs=1e-9)
    assert enumerate_h(inst, c) == pytest.approx(ref, abs=1e-9)


@given(seeds, st.integers(2, 8))
def test_disjoint_matches_bruteforce(seed, J):
    rng = np.random.default_rng(seed)
    cuts = sorted(rng.choice(np.arange(1, J), size=min(J - 1, int(rng.integers(1, 3))), replace=False))
    parts = [tuple(range(a, b)) for a, b in zip([0, *cuts], [*cuts, J])]
    pools = tuple(p for k, p in enumerate(parts) if k == 0 or rng.random() < 0.7)
    inst = tiny_instance(J=J, pools=pools)
    c = random_coeffs(rng, J, len(pools))
    ref = adv.solve_bruteforce(inst, c).value
    assert adv.closed_disjoint(inst, c).value == pytest.approx(ref, abs=1e-9)
    assert adv.solve_generic(inst, c).value == pytest.approx(ref, abs=1e-9)


@given(seeds, st.integers(3, 10))
def test_chained_matches_bruteforce_and_longest_path(seed, n):
    rng = np.random.default_rng(seed)
    inst = tiny_instance(J=n, pools=model.chain_members(n))
    c = random_coeffs(rng, n, n)
    ref = adv.solve_bruteforce(inst, c).value
    pt = adv.solve_chained(c, inst)
    assert pt.value == pytest.approx(ref, abs=1e-9)
    assert adv.membership_violations(inst, pt) == []
    assert adv.longest_path_value(c) == pytest.approx(ref, abs=1e-9)
    assert adv.solve_generic(inst, c).value == pytest.approx(ref, abs=1e-9)


@given(seeds)
def test_arbitrary_pools_generic(seed):
    rng = np.random.default_rng(seed)
    inst = tiny_instance(J=5, pools=((0, 1, 2), (2, 3), (1, 4)))
    c = random_coeffs(rng, 5, 3)
    ref = adv.solve_bruteforce(inst, c).value
    assert adv.separate(inst, c).value == pytest.approx(ref, abs=1e-9)
    assert enumerate_h(inst, c) == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("n", [3, 4, 7])
def test_longest_path_size(n):
    arcs = adv.longest_path_arcs(cc(np.ones(n), np.ones(n), np.ones(n)))
    nodes = {a for a, _, _ in arcs} | {b for _, b, _ in arcs}
    assert len(arcs) == 8 * n - 6
    assert len(nodes - {"S", "T"}) == 4 * n - 2


@given(seeds, st.integers(1, 6))
def test_relaxation_integral_for_disjoint(seed, J):
    rng = np.random.default_rng(seed)
    inst = tiny_instance(J=J, pools=(tuple(range(J)),))
    c = random_coeffs(rng, J, 1)
    assert adv.relaxation_value(inst, c) == pytest.approx(adv.solve_bruteforce(inst, c).value, abs=1e-7)


def test_structure_guards():
    chained = tiny_instance(J=3, pools=model.chain_members(3))
    with pytest.raises(adv.StructureMismatch):
        adv.closed_one_pool(cc([0] * 3, [0] * 3, [0] * 3))
    with pytest.raises(adv.StructureMismatch):
        adv.closed_disjoint(chained, cc([0] * 3, [0] * 3, [0] * 3))
    with pytest.raises(adv.StructureMismatch):
        adv.solve_chained(cc([0] * 2, [0] * 2, [0] * 2))
    with pytest.raises(adv.StructureMismatch):
        adv.solve_free(chained, cc([0] * 3, [0] * 3, [1, 0, 0]))


def test_demand_sup_coefficients():
    inst = tiny_instance(J=1, pools=(), d_hi=10, w_hi=4,
                         costs=model.CostParams(100.0, 130.0, 400.0, 50.0))
    it = adv.Iterate.from_staffing(inst, (0,), (), [0.0], [], np.zeros((1, 2)))
    assert adv.coefficients(inst, it).c_t[0] == 4000
    it = adv.Iterate.from_staffing(inst, (0,), (), [0.0], [], [[0.0, 50.0]])
    assert adv.coefficients(inst, it).c_t[0] == 800


def test_negative_hinge_vanishes():
    units = (model.UnitSpec((3.0, 11.0), (0, 10), (2, 5), model.AttendanceFunction.linear(0.9, 2, 5)),)
    inst = model.Instance(units, (), model.CostParams(100.0, 130.0, 400.0, 50.0))
    it = adv.Iterate.from_staffing(inst, (2,), (), [0.0], [], np.zeros((1, 2)))
    # only the idle-nurse sup remains: c_e * d_U
    assert adv.coefficients(inst, it).c_r[0] == 500


@given(seeds, st.sampled_from([((0, 1, 2),), ((0,), (1, 2)), ((0, 1), (1, 2), (0, 2)), ((0, 1), (1, 2))]))
def test_cut_matches_dual_vertex_maximum(seed, pools):
    """At a consistent iterate the best point equals max_{alpha,beta} F."""
    rng = np.random.default_rng(seed)
    inst = tiny_instance(J=3, pools=pools, d_hi=8, w_hi=4, y_hi=3)
    c = inst.costs
    w = tuple(int(v) for v in rng.integers(0, 5, 3))
    y = tuple(int(v) for v in rng.integers(0, 4, len(pools)))
    gamma = rng.uniform(-c.c_x, 0, 3)
    lam = rng.uniform(-c.c_x, 0, len(pools))
    rho = rng.normal(0, 1, (3, 2)) * [10, 1]
    it = adv.Iterate.from_staffing(inst, w, y, gamma, lam, rho)
    coeffs = adv.coefficients(inst, it)
    assert adv.solve_bruteforce(inst, coeffs).value == pytest.approx(
        adv.max_over_dual_vertices(inst, it), rel=1e-9, abs=1e-6)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from drstaff import _kernels as K

pytestmark = pytest.mark.skipif(not K.JIT_AVAILABLE, reason="numba not installed")


@given(seed=st.integers(0, 2**32 - 1), J=st.integers(1, 6), Q=st.integers(1, 3))
def test_demand_sup(seed, J, Q):
    rng = np.random.default_rng(seed)
    coef = rng.uniform(0, 400, J)
    rho = rng.normal(0, 5, (J, Q)) / 10.0 ** np.arange(Q)
    lo = rng.integers(0, 10, J)
    hi = lo + rng.integers(0, 30, J)
    v1, a1 = K._demand_sup_jit(coef, rho, lo, hi)
    v2, a2 = K._demand_sup_numpy(coef, rho, lo, hi)
    np.testing.assert_allclose(v1, v2, rtol=1e-12, atol=1e-9)
    # argmax may differ only on ties
    for j in range(J):
        d = float(a2[j])
        val = coef[j] * d - sum(rho[j, q] * d ** (q + 1) for q in range(Q))
        assert val == pytest.approx(v1[j], rel=1e-12, abs=1e-9)


@given(seed=st.integers(0, 2**32 - 1), J=st.integers(1, 8), I=st.integers(0, 4))
def test_adversary_enumerate(seed, J, I):
    rng = np.random.default_rng(seed)
    ct, cr = rng.normal(0, 10, J), rng.normal(0, 10, J)
    cp, cs = rng.normal(0, 10, I), np.zeros(I)
    masks = rng.integers(1, 1 << J, I).astype(np.int64)
    v1, c1 = K._adversary_enum_jit(ct, cr, cp, cs, masks)
    v2, c2 = K._adversary_enum_numpy(ct, cr, cp, cs, masks)
    assert v1 == pytest.approx(v2, rel=1e-12, abs=1e-9)


@given(seed=st.integers(0, 2**32 - 1), J=st.integers(1, 6), I=st.integers(0, 3))
def test_recourse_batch(seed, J, I):
    rng = np.random.default_rng(seed)
    short = rng.integers(-5, 8, (40, J))
    ys = rng.integers(0, 6, (40, I))
    member = rng.random((I, J)) < 0.6
    v1, x1 = K._recourse_maxflow_jit(short, ys, member, 400.0, 50.0)
    v2, x2 = K._recourse_dual_numpy(short, ys, member, 400.0, 50.0)
    v3, x3 = K._recourse_maxflow_loop(short, ys, member, 400.0, 50.0)
    np.testing.assert_allclose(v1, v2, rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(v1, v3, rtol=1e-12, atol=1e-9)
    # temporaries are the same total under every route (the LP optimum is unique in sum x)
    np.testing.assert_array_equal(np.asarray(x1).reshape(40, -1).sum(1), np.asarray(x3).reshape(40, -1).sum(1))


@given(seed=st.integers(0, 2**32 - 1), J=st.integers(1, 3), I=st.integers(0, 2))
def test_recourse_bruteforce(seed, J, I):
    rng = np.random.default_rng(seed)
    short = rng.integers(-3, 5, J)
    ys = rng.integers(0, 4, I)
    pairs = [(i, j) for i in range(I) for j in range(J) if rng.random() < 0.7]
    pp = np.array([p[0] for p in pairs], dtype=np.int64)
    pu = np.array([p[1] for p in pairs], dtype=np.int64)
    a = K._recourse_brute_jit(short, ys, pp, pu, 400.0, 50.0)
    b = K._recourse_brute_numpy(short, ys, pp, pu, 400.0, 50.0)
    assert a == pytest.approx(b, abs=1e-9)


def test_set_jit_switches_path():
    prev = K.JIT_ENABLED
    try:
        coef = np.array([3.0])
        rho = np.array([[0.1, 0.01]])
        K.set_jit(False)
        a = K.demand_sup(coef, rho, np.array([0]), np.array([20]))
        K.set_jit(True)
        b = K.demand_sup(coef, rho, np.array([0]), np.array([20]))
        np.testing.assert_allclose(a[0], b[0])
    finally:
        K.set_jit(prev)


def test_env_flag_disables_jit():
    import subprocess
    import sys

    code = "import drstaff._kernels as k; print(k.JIT_ENABLED)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"DRSTAFF_DISABLE_JIT": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "False"

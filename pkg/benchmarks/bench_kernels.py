"""Compare the numba and pure-numpy kernel paths.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run once per path to warm up (compilation for numba), then
timed as the best of ``--repeat`` runs. Results are checked for equality.
"""

import argparse
import time

import numpy as np

from drstaff import _kernels as K


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def cases(rng):
    J, I, n = 7, 1, 100_000
    short = rng.integers(-5, 15, (n, J))
    ys = rng.integers(0, 12, (n, I))
    member = np.ones((I, J), dtype=bool)
    yield ("recourse_batch (100k scenarios, J=7, one pool)",
           lambda: K._recourse_maxflow_jit(short, ys, member, 400.0, 50.0)[0],
           lambda: K._recourse_dual_numpy(short, ys, member, 400.0, 50.0)[0])
    Jc = 10
    short_c = rng.integers(-5, 15, (20_000, Jc))
    ys_c = rng.integers(0, 12, (20_000, Jc))
    chain = np.zeros((Jc, Jc), dtype=bool)
    for i in range(Jc):
        chain[i, [i, (i + 1) % Jc]] = True
    yield ("recourse_batch (20k scenarios, 10-chain)",
           lambda: K._recourse_maxflow_jit(short_c, ys_c, chain, 400.0, 50.0)[0],
           lambda: K._recourse_dual_numpy(short_c, ys_c, chain, 400.0, 50.0)[0])
    Ja = 18
    masks = np.array([(1 << 9) - 1, ((1 << 18) - 1) ^ ((1 << 6) - 1)], dtype=np.int64)
    ct, cr, cp, cs = rng.normal(0, 10, Ja), rng.normal(0, 10, Ja), np.abs(rng.normal(0, 10, 2)), np.zeros(2)
    yield ("adversary_enumerate (J=18, two pools)",
           lambda: K._adversary_enum_jit(ct, cr, cp, cs, masks)[0],
           lambda: K._adversary_enum_numpy(ct, cr, cp, cs, masks)[0])
    Jd = 200
    coef = np.full(Jd, 400.0)
    rho = rng.normal(0, 5, (Jd, 2)) * [1.0, 0.1]
    lo = np.zeros(Jd, dtype=np.int64)
    hi = np.full(Jd, 300, dtype=np.int64)
    yield ("demand_sup (200 units, support 0..300)",
           lambda: K._demand_sup_jit(coef, rho, lo, hi)[0],
           lambda: K._demand_sup_numpy(coef, rho, lo, hi)[0])
    short_b = np.array([3, 4, 2])
    ys_b = np.array([6, 5])
    pp = np.array([0, 0, 1, 1], dtype=np.int64)
    pu = np.array([0, 1, 1, 2], dtype=np.int64)
    yield ("recourse_bruteforce (3 units, 2 pools)",
           lambda: K._recourse_brute_jit(short_b, ys_b, pp, pu, 400.0, 50.0),
           lambda: K._recourse_brute_numpy(short_b, ys_b, pp, pu, 400.0, 50.0))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not K.JIT_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':48s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, jit_fn, np_fn in cases(rng):
        tj, a = best_of(jit_fn, args.repeat)
        tn, b = best_of(np_fn, args.repeat)
        if not np.allclose(a, b, rtol=1e-12, atol=1e-9):
            raise SystemExit(f"{name}: paths disagree")
        print(f"{name:48s} {tj * 1e3:9.2f}ms {tn * 1e3:9.2f}ms {tn / tj:7.1f}x")


if __name__ == "__main__":
    main()

"""Hot loops, compiled with numba when available.

Each kernel has a loop implementation (compiled by ``@njit``) and a
vectorised numpy implementation. The numpy path is used when numba is
missing or ``DRSTAFF_DISABLE_JIT=1`` is set; ``set_jit`` switches at runtime.
Both paths are exact and are cross-checked in the test suite.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

JIT_AVAILABLE = numba is not None
JIT_ENABLED = JIT_AVAILABLE and os.environ.get("DRSTAFF_DISABLE_JIT", "0").lower() not in ("1", "true", "yes")

# hard limits for exhaustive searches
MAX_ENUM_UNITS = 20
MAX_DUAL_ENUM_UNITS = 16
MAX_BRUTE_SPACE = 20_000_000
MAX_NUMPY_GRID = 1_000_000


def set_jit(enabled: bool) -> None:
    global JIT_ENABLED
    if enabled and not JIT_AVAILABLE:
        raise RuntimeError("numba is not installed")
    JIT_ENABLED = bool(enabled)


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)


# ------------------------------------------------------------- demand sup

def _demand_sup_loop(coef, rho, d_lo, d_hi):
    J, Q = rho.shape
    best = np.empty(J)
    arg = np.empty(J, dtype=np.int64)
    for j in range(J):
        bv = -np.inf
        bd = d_lo[j]
        for d in range(d_lo[j], d_hi[j] + 1):
            v = coef[j] * d
            p = 1.0
            for q in range(Q):
                p *= d
                v -= rho[j, q] * p
            if v > bv:
                bv = v
                bd = d
        best[j] = bv
        arg[j] = bd
    return best, arg


_demand_sup_jit = _njit(_demand_sup_loop)


def _demand_sup_numpy(coef, rho, d_lo, d_hi):
    J, Q = rho.shape
    best = np.empty(J)
    arg = np.empty(J, dtype=np.int64)
    powers = np.arange(1, Q + 1)
    for j in range(J):
        d = np.arange(d_lo[j], d_hi[j] + 1, dtype=float)
        vals = coef[j] * d - (d[:, None] ** powers) @ rho[j]
        k = int(np.argmax(vals))
        best[j] = vals[k]
        arg[j] = d_lo[j] + k
    return best, arg


def demand_sup(coef, rho, d_lo, d_hi):
    """Per unit, max over integer d in [d_lo, d_hi] of coef*d - sum_q rho_q d^q.

    Returns (values, maximizing d); ties go to the smallest d.
    """
    coef = np.ascontiguousarray(coef, dtype=float)
    rho = np.ascontiguousarray(np.atleast_2d(rho), dtype=float)
    d_lo = np.ascontiguousarray(d_lo, dtype=np.int64)
    d_hi = np.ascontiguousarray(d_hi, dtype=np.int64)
    if JIT_ENABLED:
        return _demand_sup_jit(coef, rho, d_lo, d_hi)
    return _demand_sup_numpy(coef, rho, d_lo, d_hi)


# ------------------------------------------------- adversary enumeration

def _adversary_enum_loop(ct, cr, cp, cs, masks):
    J = ct.shape[0]
    I = cp.shape[0]
    base = 0.0
    for j in range(J):
        base += cr[j]
    best = -np.inf
    best_code = 0
    for code in range(1 << J):
        v = base
        for j in range(J):
            if (code >> j) & 1:
                v += ct[j] - cr[j]
        for i in range(I):
            if code & masks[i]:
                v += cs[i]
            else:
                v += cp[i]
        if v > best:
            best = v
            best_code = code
    return best, best_code


_adversary_enum_jit = _njit(_adversary_enum_loop)


def _adversary_enum_numpy(ct, cr, cp, cs, masks, chunk=1 << 16):
    J = ct.shape[0]
    diff = ct - cr
    base = cr.sum()
    best, best_code = -np.inf, 0
    shifts = np.arange(J, dtype=np.int64)
    for start in range(0, 1 << J, chunk):
        codes = np.arange(start, min(start + chunk, 1 << J), dtype=np.int64)
        bits = (codes[:, None] >> shifts) & 1
        vals = base + bits @ diff
        if masks.size:
            hit = (codes[:, None] & masks[None, :]) != 0
            vals = vals + np.where(hit, cs[None, :], cp[None, :]).sum(axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, best_code = float(vals[k]), int(codes[k])
    return best, best_code


def adversary_enumerate(ct, cr, cp, cs, masks):
    """Maximize the cut value over all t in {0,1}^J.

    ``masks[i]`` is the bit mask of pool i's members. Pool i contributes
    cs[i] when some member has t = 1 and cp[i] otherwise. Returns
    (value, code) with t_j = (code >> j) & 1; ties go to the smallest code.
    """
    ct = np.ascontiguousarray(ct, dtype=float)
    if ct.shape[0] > MAX_ENUM_UNITS:
        raise ValueError(f"enumeration limited to {MAX_ENUM_UNITS} units")
    args = (ct, np.ascontiguousarray(cr, dtype=float), np.ascontiguousarray(cp, dtype=float),
            np.ascontiguousarray(cs, dtype=float), np.ascontiguousarray(masks, dtype=np.int64))
    if JIT_ENABLED:
        v, code = _adversary_enum_jit(*args)
        return float(v), int(code)
    return _adversary_enum_numpy(*args)


# ------------------------------------------------------- batch recourse

def _recourse_maxflow_loop(short, yshow, member, c_x, c_e):
    """Recourse value and temporaries per scenario via bipartite max-flow.

    Pool nurses are always dispatched (c_e >= 0), so only the amount of
    shortage they cover matters: that is the max flow from pools
    (capacity y_show) to units (capacity positive shortage).
    """
    n, J = short.shape
    I = yshow.shape[1]
    N = I + J + 2
    src = I + J
    snk = I + J + 1
    values = np.empty(n)
    temps = np.empty(n, dtype=np.int64)
    cap = np.zeros((N, N), dtype=np.int64)
    parent = np.empty(N, dtype=np.int64)
    queue = np.empty(N, dtype=np.int64)
    big = 1 << 40
    for s in range(n):
        cap[:, :] = 0
        total_short = 0
        pos_short = 0
        total_y = 0
        for j in range(J):
            total_short += short[s, j]
            if short[s, j] > 0:
                pos_short += short[s, j]
                cap[I + j, snk] = short[s, j]
        for i in range(I):
            total_y += yshow[s, i]
            cap[src, i] = yshow[s, i]
            for j in range(J):
                if member[i, j]:
                    cap[i, I + j] = big
        flow = 0
        while True:
            for k in range(N):
                parent[k] = -1
            parent[src] = src
            head = 0
            tail = 0
            queue[tail] = src
            tail += 1
            while head < tail and parent[snk] == -1:
                a = queue[head]
                head += 1
                for b in range(N):
                    if parent[b] == -1 and cap[a, b] > 0:
                        parent[b] = a
                        queue[tail] = b
                        tail += 1
            if parent[snk] == -1:
                break
            push = big
            b = snk
            while b != src:
                a = parent[b]
                if cap[a, b] < push:
                    push = cap[a, b]
                b = a
            b = snk
            while b != src:
                a = parent[b]
                cap[a, b] -= push
                cap[b, a] += push
                b = a
            flow += push
        x = pos_short - flow
        temps[s] = x
        values[s] = c_e * total_short - c_e * total_y + (c_x - c_e) * x
    return values, temps


_recourse_maxflow_jit = _njit(_recourse_maxflow_loop)


def _recourse_dual_numpy(short, yshow, member, c_x, c_e, chunk=1 << 12):
    """Same quantity by enumerating dual vertices alpha in {c_e, c_x}^J with
    beta_i = -max over pool members of alpha."""
    n, J = short.shape
    best = np.full(n, -np.inf)
    shifts = np.arange(J, dtype=np.int64)
    short_f = short.astype(float)
    y_f = yshow.astype(float)
    for start in range(0, 1 << J, chunk):
        codes = np.arange(start, min(start + chunk, 1 << J), dtype=np.int64)
        bits = ((codes[:, None] >> shifts) & 1).astype(bool)
        alpha = np.where(bits, c_x, c_e)                     # (m, J)
        vals = short_f @ alpha.T                               # (n, m)
        if member.shape[0]:
            any_x = (bits[:, None, :] & member[None, :, :]).any(axis=2)   # (m, I)
            beta = -np.where(any_x, c_x, c_e)
            vals += y_f @ beta.T
        np.maximum(best, vals.max(axis=1), out=best)
    pos = np.clip(short, 0, None).sum(axis=1)
    flow = (c_e * short.sum(axis=1) - c_e * yshow.sum(axis=1) + (c_x - c_e) * pos - best) / (c_x - c_e)
    temps = pos - np.rint(flow).astype(np.int64)
    return best, temps


def recourse_batch(short, yshow, member, c_x, c_e):
    """Exact recourse values and temporary counts for a batch of scenarios.

    short: (n, J) integers d - w_show; yshow: (n, I); member: (I, J) bool.
    """
    short = np.ascontiguousarray(short, dtype=np.int64)
    yshow = np.ascontiguousarray(yshow, dtype=np.int64).reshape(short.shape[0], -1)
    member = np.ascontiguousarray(member, dtype=np.bool_).reshape(yshow.shape[1], short.shape[1])
    if JIT_ENABLED:
        return _recourse_maxflow_jit(short, yshow, member, float(c_x), float(c_e))
    if short.shape[1] <= MAX_DUAL_ENUM_UNITS:
        return _recourse_dual_numpy(short, yshow, member, float(c_x), float(c_e))
    return _recourse_maxflow_loop(short, yshow, member, float(c_x), float(c_e))


# ------------------------------------------- exhaustive recourse oracle

def _recourse_brute_loop(short, yshow, pair_pool, pair_unit, c_x, c_e):
    """Minimum of the substituted recourse over every integer z.

    For fixed z the objective grows with x (c_x > c_e) and x is bounded
    below only by the covering row, so x_j = max(0, short_j - sum_i z_ij).
    """
    J = short.shape[0]
    P = pair_pool.shape[0]
    z = np.zeros(P, dtype=np.int64)
    used = np.zeros(yshow.shape[0], dtype=np.int64)
    cover = np.zeros(J, dtype=np.int64)
    const = 0.0
    for j in range(J):
        const += c_e * short[j]
    best = np.inf
    while True:
        ok = True
        for i in range(used.shape[0]):
            if used[i] > yshow[i]:
                ok = False
        if ok:
            v = const
            for j in range(J):
                x = short[j] - cover[j]
                if x > 0:
                    v += (c_x - c_e) * x
            for k in range(P):
                v -= c_e * z[k]
            if v < best:
                best = v
        # odometer step
        k = 0
        while k < P:
            i = pair_pool[k]
            if z[k] < yshow[i]:
                z[k] += 1
                used[i] += 1
                cover[pair_unit[k]] += 1
                break
            used[i] -= z[k]
            cover[pair_unit[k]] -= z[k]
            z[k] = 0
            k += 1
        if k == P:
            break
    return best


_recourse_brute_jit = _njit(_recourse_brute_loop)


def _recourse_brute_numpy(short, yshow, pair_pool, pair_unit, c_x, c_e):
    J = short.shape[0]
    P = pair_pool.shape[0]
    const = c_e * float(short.sum())
    if P == 0:
        return const + (c_x - c_e) * float(np.clip(short, 0, None).sum())
    grids = np.meshgrid(*[np.arange(yshow[i] + 1) for i in pair_pool], indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1)           # (m, P)
    used = np.zeros((Z.shape[0], yshow.shape[0]), dtype=np.int64)
    cover = np.zeros((Z.shape[0], J), dtype=np.int64)
    for k in range(P):
        used[:, pair_pool[k]] += Z[:, k]
        cover[:, pair_unit[k]] += Z[:, k]
    ok = (used <= yshow[None, :]).all(axis=1)
    x = np.clip(short[None, :] - cover, 0, None)
    vals = const + (c_x - c_e) * x.sum(axis=1) - c_e * Z.sum(axis=1)
    return float(vals[ok].min())


def recourse_bruteforce(short, yshow, pair_pool, pair_unit, c_x, c_e):
    short = np.ascontiguousarray(short, dtype=np.int64)
    yshow = np.ascontiguousarray(yshow, dtype=np.int64)
    pair_pool = np.ascontiguousarray(pair_pool, dtype=np.int64)
    pair_unit = np.ascontiguousarray(pair_unit, dtype=np.int64)
    space = 1
    for i in pair_pool:
        space *= int(yshow[i]) + 1
    if space > MAX_BRUTE_SPACE:
        raise ValueError(f"brute-force search space {space} exceeds {MAX_BRUTE_SPACE}")
    if JIT_ENABLED:
        return float(_recourse_brute_jit(short, yshow, pair_pool, pair_unit, float(c_x), float(c_e)))
    if space > MAX_NUMPY_GRID:
        return float(_recourse_brute_loop(short, yshow, pair_pool, pair_unit, float(c_x), float(c_e)))
    return _recourse_brute_numpy(short, yshow, pair_pool, pair_unit, float(c_x), float(c_e))

"""The inner maximisation over recourse dual vertices.

For a fixed master iterate the worst case picks, for every unit, whether
its demand dual sits at c_x (``t_j = 1``) or c_e (``t_j = 0``). Pool i's
dual is then -c_x if any member has t = 1 and -c_e otherwise. In the
binary encoding (t, s, r, p):

* r_j = 1 - t_j,
* s_ij = 1 marks the largest member of pool i with t = 1,
* p_i = 1 when no member of pool i has t = 1.

The objective is sum_j c_t t_j + c_r r_j + sum_i c_p p_i + c_s sum_j s_ij.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .backend import LinearModel, SolveParams, Status, solve
from .model import Instance, PoolStructureKind, chain_members, classify_structure


class StructureMismatch(ValueError):
    pass


@dataclass
class Iterate:
    """Master-problem values the cut coefficients depend on."""

    u: list[np.ndarray]
    v: list[np.ndarray]
    phi: list[np.ndarray]
    nu: list[np.ndarray]
    gamma: np.ndarray
    lam: np.ndarray
    rho: np.ndarray  # (J, Q), zero padded

    @classmethod
    def from_staffing(cls, instance: Instance, w: Sequence[int], y: Sequence[int],
                      gamma, lam, rho) -> "Iterate":
        """Consistent iterate: unary expansion of (w, y), phi = u*gamma, nu = v*lam."""
        gamma = np.asarray(gamma, dtype=float)
        lam = np.asarray(lam, dtype=float)
        u, phi, v, nu = [], [], [], []
        for j, unit in enumerate(instance.units):
            lo, hi = unit.staffing_bounds
            uj = (np.arange(1, hi - lo + 1) <= w[j] - lo).astype(float)
            u.append(uj)
            phi.append(uj * gamma[j])
        for i, pool in enumerate(instance.pools):
            lo, hi = pool.staffing_bounds
            vi = (np.arange(1, hi - lo + 1) <= y[i] - lo).astype(float)
            v.append(vi)
            nu.append(vi * lam[i])
        return cls(u, v, phi, nu, gamma, lam, np.atleast_2d(np.asarray(rho, dtype=float)))

    def staffing(self, instance: Instance) -> tuple[tuple[int, ...], tuple[int, ...]]:
        w = tuple(int(u.staffing_bounds[0] + round(float(np.sum(self.u[j]))))
                  for j, u in enumerate(instance.units))
        y = tuple(int(p.staffing_bounds[0] + round(float(np.sum(self.v[i]))))
                  for i, p in enumerate(instance.pools))
        return w, y


@dataclass(frozen=True, eq=False)
class CutCoefficients:
    c_t: np.ndarray
    c_r: np.ndarray
    c_p: np.ndarray
    c_s: np.ndarray


@dataclass(frozen=True)
class AdversaryPoint:
    t: tuple[int, ...]
    s: tuple[tuple[int, ...], ...]  # per pool, aligned with its members
    r: tuple[int, ...]
    p: tuple[int, ...]
    value: float = 0.0

    @property
    def key(self) -> tuple:
        return self.t, self.s


def demand_bounds(instance: Instance) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([u.demand_bounds[0] for u in instance.units], dtype=np.int64)
    hi = np.array([u.demand_bounds[1] for u in instance.units], dtype=np.int64)
    return lo, hi


def coefficients(instance: Instance, it: Iterate) -> CutCoefficients:
    c = instance.costs
    J = instance.J
    lo, hi = demand_bounds(instance)
    ct, _ = _kernels.demand_sup(np.full(J, c.c_x), it.rho, lo, hi)
    ce_sup, _ = _kernels.demand_sup(np.full(J, c.c_e), it.rho, lo, hi)
    hinge_u = np.empty(J)
    for j, unit in enumerate(instance.units):
        wl = unit.staffing_bounds[0]
        hinge_u[j] = (-c.c_e - it.gamma[j]) * wl - float(np.sum(it.phi[j]) + c.c_e * np.sum(it.u[j]))
    cp = np.empty(instance.I)
    for i, pool in enumerate(instance.pools):
        yl = pool.staffing_bounds[0]
        cp[i] = (-c.c_e - it.lam[i]) * yl - float(np.sum(it.nu[i]) + c.c_e * np.sum(it.v[i]))
    return CutCoefficients(ct, np.maximum(hinge_u, 0.0) + ce_sup, np.maximum(cp, 0.0),
                           np.zeros(instance.I))


def dual_objective(instance: Instance, it: Iterate, alpha: np.ndarray, beta: np.ndarray) -> float:
    """F(alpha, beta): hinge terms at the staffing implied by the iterate plus
    the demand sups."""
    w, y = it.staffing(instance)
    lo, hi = demand_bounds(instance)
    sups, _ = _kernels.demand_sup(np.asarray(alpha, dtype=float), it.rho, lo, hi)
    val = float(np.sum(np.maximum((-np.asarray(alpha) - it.gamma) * np.asarray(w), 0.0)))
    if instance.I:
        val += float(np.sum(np.maximum((np.asarray(beta) - it.lam) * np.asarray(y), 0.0)))
    return val + float(sups.sum())


def max_over_dual_vertices(instance: Instance, it: Iterate) -> float:
    """max of F over alpha in {c_e, c_x}^J with beta_i = -max_{P_i} alpha."""
    c = instance.costs
    best = -np.inf
    for code in range(1 << instance.J):
        t = np.array([(code >> j) & 1 for j in range(instance.J)], dtype=bool)
        alpha = np.where(t, c.c_x, c.c_e)
        beta = np.array([-alpha[list(p.members)].max() for p in instance.pools])
        best = max(best, dual_objective(instance, it, alpha, beta))
    return best


# ----------------------------------------------------------------- points

def point_from_t(instance: Instance, t: Sequence[int], coeffs: CutCoefficients | None = None) -> AdversaryPoint:
    """The unique member of H with the given t."""
    return point_from_members([p.members for p in instance.pools], t, coeffs)


def point_from_members(members: Sequence[Sequence[int]], t: Sequence[int],
                       coeffs: CutCoefficients | None = None) -> AdversaryPoint:
    t = tuple(int(v) for v in t)
    s, p = [], []
    for mem in members:
        active = [j for j in mem if t[j]]
        top = max(active) if active else None
        s.append(tuple(int(j == top) for j in mem))
        p.append(0 if active else 1)
    pt = AdversaryPoint(t, tuple(s), tuple(1 - v for v in t), tuple(p))
    if coeffs is not None:
        pt = AdversaryPoint(pt.t, pt.s, pt.r, pt.p, point_value(coeffs, pt))
    return pt


def point_value(coeffs: CutCoefficients, point: AdversaryPoint) -> float:
    val = float(np.dot(coeffs.c_t, point.t) + np.dot(coeffs.c_r, point.r))
    val += float(np.dot(coeffs.c_p, point.p)) if len(point.p) else 0.0
    val += float(sum(coeffs.c_s[i] * sum(si) for i, si in enumerate(point.s)))
    return val


def membership_violations(instance: Instance, point: AdversaryPoint) -> list[str]:
    """Every defining constraint of H the point violates."""
    out = []
    t, r = point.t, point.r
    for j in range(instance.J):
        if t[j] not in (0, 1) or t[j] + r[j] != 1:
            out.append(f"unit {j}: t + r != 1")
    for i, pool in enumerate(instance.pools):
        s = dict(zip(pool.members, point.s[i]))
        if sum(s.values()) > 1:
            out.append(f"pool {i}: more than one s")
        if sum(s.values()) + point.p[i] != 1:
            out.append(f"pool {i}: sum s + p != 1")
        for j in pool.members:
            if s[j] > t[j]:
                out.append(f"pool {i}: s[{j}] > t[{j}]")
            if t[j] > sum(s.values()):
                out.append(f"pool {i}: t[{j}] not covered by s")
            for ell in pool.members:
                if j > ell and t[j] + s[ell] > 1:
                    out.append(f"pool {i}: t[{j}] + s[{ell}] > 1")
            if t[j] > sum(s[ell] for ell in pool.members if ell >= j):
                out.append(f"pool {i}: valid inequality fails at {j}")
    return out


def _masks(instance: Instance) -> np.ndarray:
    return np.array([sum(1 << j for j in p.members) for p in instance.pools], dtype=np.int64)


def solve_bruteforce(instance: Instance, coeffs: CutCoefficients) -> AdversaryPoint:
    if instance.J > _kernels.MAX_ENUM_UNITS:
        raise ValueError(f"brute force limited to {_kernels.MAX_ENUM_UNITS} units")
    _, code = _kernels.adversary_enumerate(coeffs.c_t, coeffs.c_r, coeffs.c_p, coeffs.c_s,
                                           _masks(instance))
    t = [(code >> j) & 1 for j in range(instance.J)]
    return point_from_t(instance, t, coeffs)


def h_model(instance: Instance, coeffs: CutCoefficients | None, relax: bool = False,
            strengthen: bool = True, defining: bool = True):
    """H as linear rows over (t, s, r, p).

    ``defining=False`` drops the two families not needed once the valid
    inequalities are present (the relaxation used for the convex hull
    results). Returns (model, t, s, r, p) index arrays.
    """
    m = LinearModel("adversary", sense="max")
    J, I = instance.J, instance.I
    zero = coeffs is None
    t = np.array([m.add_var(0, 1, not relax, 0.0 if zero else coeffs.c_t[j], f"t[{j}]") for j in range(J)])
    r = np.array([m.add_var(0, 1, False, 0.0 if zero else coeffs.c_r[j], f"r[{j}]") for j in range(J)])
    p = np.array([m.add_var(0, 1, False, 0.0 if zero else coeffs.c_p[i], f"p[{i}]") for i in range(I)])
    s = []
    for i, pool in enumerate(instance.pools):
        s.append({j: m.add_var(0, 1, not relax, 0.0 if zero else coeffs.c_s[i], f"s[{i},{j}]")
                  for j in pool.members})
    for j in range(J):
        m.add_row([t[j], r[j]], [1, 1], 1, 1, f"tr[{j}]")
    for i, pool in enumerate(instance.pools):
        si = s[i]
        members = pool.members
        m.add_row([*si.values(), p[i]], [1] * (len(si) + 1), 1, 1, f"sp[{i}]")
        m.add_row(list(si.values()), [1] * len(si), hi=1, name=f"one_s[{i}]")
        for j in members:
            m.add_row([si[j], t[j]], [1, -1], hi=0, name=f"s_le_t[{i},{j}]")
            if defining:
                for ell in members:
                    if j > ell:
                        m.add_row([t[j], si[ell]], [1, 1], hi=1, name=f"after[{i},{j},{ell}]")
                m.add_row([t[j], *si.values()], [1] + [-1] * len(si), hi=0, name=f"cover[{i},{j}]")
            if strengthen:
                tail = [si[ell] for ell in members if ell >= j]
                m.add_row([t[j], *tail], [1] + [-1] * len(tail), hi=0, name=f"valid[{i},{j}]")
    return m, t, s, r, p


def solve_generic(instance: Instance, coeffs: CutCoefficients,
                  params: SolveParams = SolveParams()) -> AdversaryPoint:
    m, t, *_ = h_model(instance, coeffs)
    out = solve(m, params)
    if out.status != Status.OPTIMAL:
        raise RuntimeError(f"adversary MILP ended with status {out.status.value}")
    tv = np.rint(out.x[t]).astype(int)
    return point_from_t(instance, tv, coeffs)


def relaxation_value(instance: Instance, coeffs: CutCoefficients) -> float:
    """Optimal value over the LP relaxation with the valid inequalities."""
    m, *_ = h_model(instance, coeffs, relax=True, defining=False)
    out = solve(m, SolveParams(feasibility_tol=1e-9))
    if out.status != Status.OPTIMAL:
        raise RuntimeError(f"relaxation ended with status {out.status.value}")
    return float(out.objective)


# ----------------------------------------------------------- closed forms

def _one_pool_branch(ct: np.ndarray, cr: np.ndarray, cp: float) -> tuple[float, list[int]]:
    """Best value and t over one pool whose members are ordered as given.

    Either no member is active (value cp + sum cr) or member j is the
    last active one: members before j choose freely, members after are off.
    """
    n = ct.size
    best_val = cp + float(cr.sum())
    best_t = [0] * n
    prefix = 0.0
    suffix = float(cr.sum())
    for j in range(n):
        suffix -= cr[j]
        val = ct[j] + prefix + suffix
        if val > best_val:
            best_val = val
            best_t = [int(ct[k] >= cr[k]) for k in range(j)] + [1] + [0] * (n - j - 1)
        prefix += max(ct[j], cr[j])
    return best_val, best_t


def closed_one_pool(coeffs: CutCoefficients, instance: Instance | None = None) -> AdversaryPoint:
    if len(coeffs.c_p) != 1:
        raise StructureMismatch("closed_one_pool needs exactly one pool")
    if instance is not None and classify_structure(instance) != PoolStructureKind.ONE_POOL:
        raise StructureMismatch("instance is not a one-pool instance")
    _, t = _one_pool_branch(coeffs.c_t, coeffs.c_r, float(coeffs.c_p[0]))
    J = len(t)
    s = tuple(int(j == max((k for k in range(J) if t[k]), default=-1)) for j in range(J))
    pt = AdversaryPoint(tuple(t), (s,), tuple(1 - v for v in t), (0 if any(t) else 1,))
    return AdversaryPoint(pt.t, pt.s, pt.r, pt.p, point_value(coeffs, pt))


def closed_disjoint(instance: Instance, coeffs: CutCoefficients) -> AdversaryPoint:
    kind = classify_structure(instance)
    if kind not in (PoolStructureKind.DISJOINT, PoolStructureKind.ONE_POOL, PoolStructureKind.NO_POOL):
        raise StructureMismatch(f"closed_disjoint needs disjoint pools, got {kind.value}")
    t = [0] * instance.J
    covered: set[int] = set()
    for i, pool in enumerate(instance.pools):
        idx = list(pool.members)
        covered.update(idx)
        _, ti = _one_pool_branch(coeffs.c_t[idx], coeffs.c_r[idx], float(coeffs.c_p[i]))
        for j, v in zip(idx, ti):
            t[j] = v
    for j in range(instance.J):
        if j not in covered:
            t[j] = int(coeffs.c_t[j] > coeffs.c_r[j])
    return point_from_t(instance, t, coeffs)


def solve_free(instance: Instance, coeffs: CutCoefficients) -> AdversaryPoint:
    """Exact when every pool term is zero: units decouple."""
    if np.any(coeffs.c_p != 0) or np.any(coeffs.c_s != 0):
        raise StructureMismatch("pool coefficients must vanish")
    return point_from_t(instance, (coeffs.c_t > coeffs.c_r).astype(int), coeffs)


def solve_chained(coeffs: CutCoefficients, instance: Instance | None = None) -> AdversaryPoint:
    """DP over states (t_1, t_i); pool i covers units i and i+1 (mod I)."""
    ct, cr, cp = coeffs.c_t, coeffs.c_r, coeffs.c_p
    n = ct.size
    if cp.size != n or n < 3:
        raise StructureMismatch("chained pools need I = J >= 3")
    if instance is not None and classify_structure(instance) != PoolStructureKind.CHAINED:
        raise StructureMismatch("instance is not chained")
    # V[a, b] = best reward of stages 1..i with t_1 = a, t_i = b
    V = np.full((2, 2), -np.inf)
    V[0, 0], V[1, 1] = cr[0], ct[0]
    back = []
    for i in range(1, n):
        nxt = np.full((2, 2), -np.inf)
        arg = np.zeros((2, 2), dtype=int)
        for a in (0, 1):
            for b in (0, 1):
                stage = ct[i] + (cr[i] - ct[i]) * (1 - b)
                for prev in (0, 1):
                    cand = V[a, prev] + stage + cp[i - 1] * (1 - prev) * (1 - b)
                    if cand > nxt[a, b]:
                        nxt[a, b], arg[a, b] = cand, prev
        back.append(arg)
        V = nxt
    best, best_ab = -np.inf, (0, 0)
    for a in (0, 1):
        for b in (0, 1):
            cand = V[a, b] + cp[n - 1] * (1 - b) * (1 - a)
            if cand > best:
                best, best_ab = cand, (a, b)
    a, b = best_ab
    t = [0] * n
    t[0], t[n - 1] = a, b
    for i in range(n - 1, 0, -1):
        t[i] = b
        b = back[i - 1][a, b]
    t[0] = a
    return point_from_members(chain_members(n), t, coeffs)


def longest_path_arcs(coeffs: CutCoefficients) -> list[tuple[object, object, float]]:
    """Layered DAG whose longest S-T path equals the chained optimum.

    Nodes are 'S', 'T', (1, a) for stage one and (i, a, b) for stage i >= 2
    with a = t_1 and b = t_i. There are 4I - 2 stage nodes plus S and T,
    and 8I - 6 arcs.
    """
    ct, cr, cp = coeffs.c_t, coeffs.c_r, coeffs.c_p
    n = ct.size
    arcs = [("S", (1, a), ct[0] * a + cr[0] * (1 - a)) for a in (0, 1)]
    for i in range(2, n + 1):
        k = i - 1
        for a in (0, 1):
            prevs = [a] if i == 2 else [0, 1]
            for prev in prevs:
                src = (1, a) if i == 2 else (i - 1, a, prev)
                for b in (0, 1):
                    w = ct[k] + (cr[k] - ct[k]) * (1 - b) + cp[k - 1] * (1 - prev) * (1 - b)
                    arcs.append((src, (i, a, b), w))
    for a in (0, 1):
        for b in (0, 1):
            arcs.append(((n, a, b), "T", cp[n - 1] * (1 - b) * (1 - a)))
    return arcs


def longest_path_value(coeffs: CutCoefficients) -> float:
    dist: dict[object, float] = {"S": 0.0}
    for src, dst, w in longest_path_arcs(coeffs):  # arcs are listed in topological order
        if src in dist:
            dist[dst] = max(dist.get(dst, -np.inf), dist[src] + w)
    return dist["T"]


def chained_relaxation(I: int) -> tuple[LinearModel, dict[str, np.ndarray]]:
    """Relaxation of H for chained pools after substituting s_{i,i+1} = t_{i+1}.

    Variables (t, s_ii, r, p) with rows s_ii <= t_i <= s_ii + t_next <= 1,
    t + r = 1 and p + s_ii + t_next = 1.
    """
    m = LinearModel("chained_relaxation", sense="max")
    t = m.add_vars(I, 0, 1, name="t")
    s = m.add_vars(I, 0, 1, name="s")
    r = m.add_vars(I, 0, 1, name="r")
    p = m.add_vars(I, 0, 1, name="p")
    for i in range(I):
        nx = (i + 1) % I
        m.add_row([s[i], t[i]], [1, -1], hi=0, name=f"s_le_t[{i}]")
        m.add_row([t[i], s[i], t[nx]], [1, -1, -1], hi=0, name=f"t_le_s_plus_next[{i}]")
        m.add_row([s[i], t[nx]], [1, 1], hi=1, name=f"s_plus_next_le_1[{i}]")
        m.add_row([t[i], r[i]], [1, 1], 1, 1, name=f"tr[{i}]")
        m.add_row([p[i], s[i], t[nx]], [1, 1, 1], 1, 1, name=f"p[{i}]")
    return m, {"t": t, "s": s, "r": r, "p": p}


def separate(instance: Instance, coeffs: CutCoefficients, kind: PoolStructureKind | None = None,
             params: SolveParams = SolveParams()) -> AdversaryPoint:
    """Exact maximiser, dispatched on the pool structure."""
    kind = kind or classify_structure(instance)
    if kind == PoolStructureKind.NO_POOL:
        return solve_free(instance, coeffs)
    if kind == PoolStructureKind.ONE_POOL:
        return closed_one_pool(coeffs, instance)
    if kind == PoolStructureKind.DISJOINT:
        return closed_disjoint(instance, coeffs)
    if kind == PoolStructureKind.CHAINED:
        return solve_chained(coeffs, instance)
    return solve_generic(instance, coeffs, params)

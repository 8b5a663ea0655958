"""Non-emptiness of the moment ambiguity set.

The set of distributions with the prescribed demand moments and
show-up means is nonempty for a staffing (w, y) exactly when

1. every unit's expected show-ups lie in [0, w_j],
2. every pool's expected show-ups lie in [0, y_i],
3. every unit's demand moments are attained by some distribution on the
   integer support [d_L, d_U] (an LP whose optimal slack must be zero).

``construct_distribution`` builds an explicit member of the set when the
checks pass.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .backend import INF, LinearModel, SolveParams, Status, solve
from .model import Instance, UnitSpec


@dataclass(frozen=True)
class FeasibilityReport:
    condition1: tuple[bool, ...]
    condition2: tuple[bool, ...]
    condition3: tuple[float, ...]
    overall: bool
    tol: float = 1e-7

    def failures(self) -> list[str]:
        out = [f"condition 1 (unit expected show-ups within [0, w]) fails for unit {j}"
               for j, ok in enumerate(self.condition1) if not ok]
        out += [f"condition 2 (pool expected show-ups within [0, y]) fails for pool {i}"
                for i, ok in enumerate(self.condition2) if not ok]
        out += [f"condition 3 (demand moments representable on the support) fails for "
                f"unit {j}: slack {v:.3g}" for j, v in enumerate(self.condition3) if v > self.tol]
        return out


def _moment_lp(moments: tuple[float, ...], lo: int, hi: int) -> tuple[float, np.ndarray]:
    """min sum |slack| so that a pmf on {lo..hi} matches the raw moments."""
    Q = len(moments)
    support = np.arange(lo, hi + 1, dtype=float)
    m = LinearModel("moment_check")
    p = m.add_vars(support.size, 0.0, INF, name="p")
    tp = m.add_vars(Q, 0.0, INF, obj=1.0, name="tau_plus")
    tm = m.add_vars(Q, 0.0, INF, obj=1.0, name="tau_minus")
    for q in range(Q):
        idx = np.concatenate([p, [tp[q], tm[q]]])
        coef = np.concatenate([support ** (q + 1), [1.0, -1.0]])
        m.add_row(idx, coef, moments[q], moments[q], f"moment[{q + 1}]")
    m.add_row(p, np.ones(p.size), 1.0, 1.0, "mass")
    out = solve(m, SolveParams(feasibility_tol=1e-9))
    if out.status != Status.OPTIMAL:
        raise RuntimeError(f"moment LP ended with status {out.status.value}")
    return max(float(out.objective), 0.0), np.clip(out.x[p], 0.0, None)


@functools.lru_cache(maxsize=4096)
def _condition3(moments: tuple[float, ...], lo: int, hi: int) -> tuple[float, tuple[float, ...]]:
    val, pmf = _moment_lp(moments, lo, hi)
    return val, tuple(pmf)


def condition3_value(unit: UnitSpec) -> float:
    return _condition3(tuple(unit.moments), *unit.demand_bounds)[0]


def check_feasibility(instance: Instance, staffing, tol: float = 1e-7) -> FeasibilityReport:
    w, y = staffing
    c1 = tuple(bool(0.0 <= u.attendance(w[j]) <= w[j]) for j, u in enumerate(instance.units))
    c2 = tuple(bool(0.0 <= p.attendance(y[i]) <= y[i]) for i, p in enumerate(instance.pools))
    c3 = tuple(condition3_value(u) for u in instance.units)
    overall = all(c1) and all(c2) and all(v <= tol for v in c3)
    return FeasibilityReport(c1, c2, c3, overall, tol)


def check_all_levels(instance: Instance, tol: float = 1e-7) -> list[str]:
    """Conditions 1-2 at every staffing level in range, condition 3 once."""
    out = []
    for j, u in enumerate(instance.units):
        lv = np.arange(u.attendance.base_level, u.attendance.upper_level + 1)
        bad = lv[(u.attendance.array < 0) | (u.attendance.array > lv)]
        if bad.size:
            out.append(f"condition 1 fails for unit {j} at staffing level {int(bad[0])}")
    for i, p in enumerate(instance.pools):
        lv = np.arange(p.attendance.base_level, p.attendance.upper_level + 1)
        bad = lv[(p.attendance.array < 0) | (p.attendance.array > lv)]
        if bad.size:
            out.append(f"condition 2 fails for pool {i} at staffing level {int(bad[0])}")
    for j, u in enumerate(instance.units):
        v = condition3_value(u)
        if v > tol:
            out.append(f"condition 3 (demand moments representable on the support) fails "
                       f"for unit {j}: slack {v:.3g}")
    return out


# ------------------------------------------------------------ construction

@dataclass(frozen=True)
class Marginal:
    support: np.ndarray
    probs: np.ndarray

    def moment(self, q: int) -> float:
        return float(np.dot(self.probs, self.support.astype(float) ** q))


@dataclass(frozen=True)
class ProductDistribution:
    """Independent marginals for every demand, unit show-up and pool show-up."""

    demand: tuple[Marginal, ...]
    w_show: tuple[Marginal, ...]
    y_show: tuple[Marginal, ...]

    def max_moment_error(self, instance: Instance, staffing) -> float:
        w, y = staffing
        err = 0.0
        for j, u in enumerate(instance.units):
            for q, mu in enumerate(u.moments, start=1):
                err = max(err, abs(self.demand[j].moment(q) - mu))
            err = max(err, abs(self.w_show[j].moment(1) - u.attendance(w[j])))
            err = max(err, abs(self.demand[j].probs.sum() - 1.0), abs(self.w_show[j].probs.sum() - 1.0))
        for i, p in enumerate(instance.pools):
            err = max(err, abs(self.y_show[i].moment(1) - p.attendance(y[i])),
                      abs(self.y_show[i].probs.sum() - 1.0))
        return err


def two_point(mean: float) -> Marginal:
    """Distribution on {floor(mean), ceil(mean)} with the given mean."""
    lo = int(np.floor(mean))
    frac = mean - lo
    if frac == 0.0:
        return Marginal(np.array([lo]), np.array([1.0]))
    return Marginal(np.array([lo, lo + 1]), np.array([1.0 - frac, frac]))


def _polish(moments: tuple[float, ...], support: np.ndarray, pmf: np.ndarray) -> np.ndarray:
    """Re-solve the moment equations exactly on the LP's (basic) support."""
    keep = pmf > 1e-13
    pts = support[keep].astype(float)
    A = np.vstack([pts ** q for q in range(len(moments) + 1)])
    b = np.concatenate([[1.0], moments])
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    if sol.min() < -1e-12:
        return pmf
    out = np.zeros_like(pmf)
    out[keep] = np.clip(sol, 0.0, None)
    return out


def construct_distribution(instance: Instance, staffing) -> ProductDistribution:
    """Explicit member of the ambiguity set built from the moment LPs."""
    w, y = staffing
    demand = []
    for u in instance.units:
        lo, hi = u.demand_bounds
        _, pmf = _condition3(tuple(u.moments), lo, hi)
        support = np.arange(lo, hi + 1)
        pmf = np.asarray(pmf)
        polished = _polish(u.moments, support, pmf)

        def err(p):
            return max(abs(np.dot(p, support.astype(float) ** q) - mu)
                       for q, mu in enumerate((1.0,) + tuple(u.moments)))
        demand.append(Marginal(support, polished if err(polished) <= err(pmf) else pmf))
    w_show = tuple(two_point(u.attendance(w[j])) for j, u in enumerate(instance.units))
    y_show = tuple(two_point(p.attendance(y[i])) for i, p in enumerate(instance.pools))
    return ProductDistribution(tuple(demand), w_show, y_show)

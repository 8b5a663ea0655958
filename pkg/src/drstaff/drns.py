"""Distributionally robust staffing: separation algorithm, monolithic
MILPs for the structured cases, and fixed-staffing oracles."""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import adversary as adv
from .ambiguity import check_all_levels
from .backend import INF, LinearModel, SolveParams, Status, solve
from .model import (AttendanceFunction, Instance, PoolSpec, PoolStructureKind, StaffingSolution,
                    classify_structure)
from .reformulation import CutSet, DuplicateCut, add_epigraphs, add_expansion
from .second_stage import membership

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
MAX_ORACLE_UNITS = 12
MAX_PRIMAL_SUPPORT = 200_000


class AmbiguitySetEmpty(ValueError):
    """The moment data admit no distribution for some staffing in range."""


class SolveFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    master_obj: float
    separation_value: float
    violation: float
    cuts: int
    wall_time: float

    def line(self) -> str:
        return (f"iter={self.iteration} master_obj={self.master_obj:.10g} "
                f"separation_value={self.separation_value:.10g} "
                f"violation={self.violation:.3e} cuts={self.cuts} wall_time={self.wall_time:.3f}")


@dataclass
class SeparationLog:
    records: list[IterationRecord] = field(default_factory=list)
    theta: float = float("nan")
    final_iterate: adv.Iterate | None = None
    cut_points: list[adv.AdversaryPoint] = field(default_factory=list)
    stalled: bool = False

    def lines(self) -> list[str]:
        return [r.line() for r in self.records]


def require_feasible(instance: Instance) -> None:
    failures = check_all_levels(instance)
    if failures:
        raise AmbiguitySetEmpty("; ".join(failures))


def _solution(instance: Instance, w, y, dr_cost: float, method: str, cuts: int, start: float,
              status: str = "optimal", **extra) -> StaffingSolution:
    first = instance.first_stage_cost(w, y)
    return StaffingSolution(tuple(w), tuple(y), float(dr_cost), first, float(dr_cost) - first,
                            method, cuts, time.perf_counter() - start, status, extra)


# ---------------------------------------------------------------- separation

def _seed_points(instance: Instance) -> list[adv.AdversaryPoint]:
    J = instance.J
    return [adv.point_from_t(instance, [0] * J), adv.point_from_t(instance, [1] * J)]


def solve_separation(instance: Instance, eps: float = DEFAULT_EPS, max_iter: int = 500,
                     time_limit: float | None = None, params: SolveParams = SolveParams(),
                     kind: PoolStructureKind | None = None,
                     on_iteration: Callable[[IterationRecord], None] | None = None,
                     encoding: str = "auto") -> tuple[StaffingSolution, SeparationLog]:
    """Delayed cut generation over the adversary points.

    Stops when the master's theta is within ``eps`` of the separation
    value. If the oracle returns a point whose cut is already present the
    violation is below solver precision; the run stops there and is
    flagged as stalled when the violation exceeds ``1e-6 * (1 + |theta|)``.
    """
    require_feasible(instance)
    kind = kind or classify_structure(instance)
    start = time.perf_counter()
    m = LinearModel("separation_master")
    ev, _, _ = add_expansion(m, instance, encoding=encoding)
    dv = add_epigraphs(m, instance, ev)
    theta = m.add_var(-INF, INF, obj=1.0, name="theta")
    cuts = CutSet(m, theta, dv)
    for pt in _seed_points(instance):
        if pt not in cuts:
            cuts.add(pt)

    slog = SeparationLog()
    status = "optimal"
    best = None
    for it_no in range(1, max_iter + 1):
        remaining = None
        if time_limit is not None:
            remaining = time_limit - (time.perf_counter() - start)
            if remaining <= 0:
                status = "time_limit"
                break
        p = SolveParams(remaining if remaining is not None else params.time_limit,
                        params.mip_gap, params.feasibility_tol, params.threads, params.seed)
        out = solve(m, p)
        if out.status == Status.LIMIT:
            status = "time_limit"
            break
        if not out.ok:
            raise SolveFailure(f"master problem ended with status {out.status.value}")
        x = out.x
        iterate = ev.iterate(instance, x)
        coeffs = adv.coefficients(instance, iterate)
        point = adv.separate(instance, coeffs, kind, params)
        th = float(x[theta])
        violation = point.value - th
        rec = IterationRecord(it_no, float(out.objective), point.value, violation, len(cuts),
                              time.perf_counter() - start)
        slog.records.append(rec)
        if on_iteration:
            on_iteration(rec)
        log.debug(rec.line())
        best = (x, out.objective, iterate, th)
        if violation <= eps:
            break
        try:
            cuts.add(point)
        except DuplicateCut:
            slog.stalled = violation > 1e-6 * (1.0 + abs(th))
            if slog.stalled:
                status = "stalled"
                log.warning("separation stalled: duplicate cut with violation %.3e", violation)
            break
    else:
        status = "iteration_limit"

    if best is None:
        raise SolveFailure(f"no master solution before the {status.replace('_', ' ')}")
    x, obj, iterate, th = best
    w, y = ev.staffing(instance, x)
    slog.theta = th
    slog.final_iterate = iterate
    slog.cut_points = list(cuts.points)
    sol = _solution(instance, w, y, obj, "separation", len(cuts), start, status,
                    structure=kind.value, eps=eps, iterations=len(slog.records),
                    mip_gap=params.mip_gap, feasibility_tol=params.feasibility_tol)
    return sol, slog


# ---------------------------------------------------------------- monolithic

def _one_pool_rows(m: LinearModel, theta: int, members, dv, hinge: int | None) -> None:
    """theta >= hinge + sum (zeta + eta_e), theta >= eta_x_j + sum_{l<j} chi_l + sum_{l>j} (zeta + eta_e)."""
    members = sorted(members)
    idx = [theta]
    coef = [1.0]
    if hinge is not None:
        idx.append(hinge)
        coef.append(-1.0)
    for l in members:
        idx += [int(dv.zeta[l]), int(dv.eta_e[l])]
        coef += [-1.0, -1.0]
    m.add_row(idx, coef, 0.0, INF, "p_branch")
    for pos, j in enumerate(members):
        idx = [theta, int(dv.eta_x[j])]
        coef = [1.0, -1.0]
        for l in members[:pos]:
            idx.append(int(dv.chi[l]))
            coef.append(-1.0)
        for l in members[pos + 1:]:
            idx += [int(dv.zeta[l]), int(dv.eta_e[l])]
            coef += [-1.0, -1.0]
        m.add_row(idx, coef, 0.0, INF, f"t_branch[{j}]")


def _chained_rows(m: LinearModel, theta: int, dv, n: int) -> None:
    """Dual of the longest-path LP over states (t_1, t_i)."""
    pi_s = m.add_var(-INF, INF, name="pi_S")
    pi_t = m.add_var(-INF, INF, name="pi_T")
    layer = {(a,): m.add_var(-INF, INF, name=f"pi[1,{a}]") for a in (0, 1)}
    m.add_row([theta, pi_s, pi_t], [1.0, -1.0, 1.0], 0.0, INF, "longest_path")

    def arc_rhs(i: int, ti: int, tprev: int | None):
        # eta_x_i + (1 - t_i)(zeta_i + eta_e_i - eta_x_i) + (1 - t_prev)(1 - t_i) hinge_{i-1}
        idx, coef = [], []
        if ti:
            idx.append(int(dv.eta_x[i]))
        else:
            idx += [int(dv.zeta[i]), int(dv.eta_e[i])]
        coef += [1.0] * len(idx)
        if tprev is not None and not tprev and not ti:
            idx.append(int(dv.pool_hinge[i - 1]))
            coef.append(1.0)
        return idx, coef

    for a in (0, 1):
        idx, coef = arc_rhs(0, a, None)
        m.add_row([pi_s, layer[(a,)], *idx], [1.0, -1.0] + [-c for c in coef], 0.0, INF,
                  f"arc[S,{a}]")
    prev = {(a, a): layer[(a,)] for a in (0, 1)}  # keyed (t_1, t_{i-1})
    for i in range(1, n):
        cur = {(a, b): m.add_var(-INF, INF, name=f"pi[{i + 1},{a}{b}]") for a in (0, 1) for b in (0, 1)}
        for (a, tp), node in prev.items():
            for b in (0, 1):
                idx, coef = arc_rhs(i, b, tp)
                m.add_row([node, cur[(a, b)], *idx], [1.0, -1.0] + [-c for c in coef], 0.0, INF,
                          f"arc[{i},{a}{tp}->{a}{b}]")
        prev = cur
    for (a, b), node in prev.items():
        idx, coef = [], []
        if not a and not b:
            idx, coef = [int(dv.pool_hinge[n - 1])], [1.0]
        m.add_row([node, pi_t, *idx], [1.0, -1.0] + [-c for c in coef], 0.0, INF,
                  f"arc[{a}{b},T]")


def build_monolithic(instance: Instance, kind: PoolStructureKind, encoding: str = "auto"):
    m = LinearModel(f"monolithic_{kind.value}")
    ev, _, _ = add_expansion(m, instance, encoding=encoding)
    dv = add_epigraphs(m, instance, ev, chi=True)
    J = instance.J
    if kind == PoolStructureKind.NO_POOL:
        theta = m.add_var(-INF, INF, obj=1.0, name="theta")
        _one_pool_rows(m, theta, range(J), dv, None)
    elif kind == PoolStructureKind.ONE_POOL:
        theta = m.add_var(-INF, INF, obj=1.0, name="theta")
        _one_pool_rows(m, theta, instance.pools[0].members, dv, int(dv.pool_hinge[0]))
    elif kind == PoolStructureKind.DISJOINT:
        covered = set()
        for i, pool in enumerate(instance.pools):
            th = m.add_var(-INF, INF, obj=1.0, name=f"theta[{i}]")
            _one_pool_rows(m, th, pool.members, dv, int(dv.pool_hinge[i]))
            covered.update(pool.members)
        for j in range(J):
            if j not in covered:
                m.add_objective(int(dv.chi[j]), 1.0)
    elif kind == PoolStructureKind.CHAINED:
        theta = m.add_var(-INF, INF, obj=1.0, name="theta")
        _chained_rows(m, theta, dv, J)
    else:
        raise adv.StructureMismatch(f"no monolithic model for structure {kind.value}")
    return m, ev, dv


def solve_monolithic(instance: Instance, structure: PoolStructureKind | str | None = None,
                     params: SolveParams = SolveParams(), check: bool = True,
                     encoding: str = "auto") -> StaffingSolution:
    actual = classify_structure(instance)
    kind = PoolStructureKind(structure) if structure is not None else actual
    if kind != actual:
        raise adv.StructureMismatch(f"instance has structure {actual.value}, not {kind.value}")
    if check:
        require_feasible(instance)
    start = time.perf_counter()
    m, ev, _ = build_monolithic(instance, kind, encoding)
    out = solve(m, params)
    if out.status == Status.LIMIT and out.x is not None:
        status = "time_limit"
    elif out.ok:
        status = "optimal"
    else:
        raise SolveFailure(f"monolithic model ended with status {out.status.value}")
    w, y = ev.staffing(instance, out.x)
    return _solution(instance, w, y, out.objective, f"milp:{kind.value}", 0, start, status,
                     structure=kind.value, mip_gap=params.mip_gap, gap=out.gap,
                     feasibility_tol=params.feasibility_tol)


def solve_drns(instance: Instance, method: str = "auto", params: SolveParams = SolveParams(),
               eps: float = DEFAULT_EPS, **kw) -> tuple[StaffingSolution, SeparationLog | None]:
    kind = classify_structure(instance)
    if method == "milp" or (method == "auto" and kind != PoolStructureKind.ARBITRARY):
        return solve_monolithic(instance, kind, params, encoding=kw.get("encoding", "auto")), None
    if method in ("auto", "separation"):
        return solve_separation(instance, eps=eps, params=params, **kw)
    raise ValueError(f"unknown method {method!r}")


# ----------------------------------------------------- flexibility and oracles

def one_pool_variant(instance: Instance) -> Instance:
    """Same units with a single pool covering all of them."""
    if not instance.pools:
        raise ValueError("instance has no pool to take bounds and attendance from")
    tpl = instance.pools[0]
    return instance.replace(pools=(PoolSpec(tuple(range(instance.J)), tpl.staffing_bounds,
                                            tpl.attendance),))


def no_pool_variant(instance: Instance) -> Instance:
    return instance.replace(pools=())


def flexibility_value(instance: Instance, params: SolveParams = SolveParams()) -> dict:
    if any(p.staffing_bounds[0] != 0 for p in instance.pools):
        raise ValueError("flexibility value needs y_L = 0 for every pool")
    z0 = solve_monolithic(no_pool_variant(instance), PoolStructureKind.NO_POOL, params).dr_cost
    z1 = solve_monolithic(one_pool_variant(instance), PoolStructureKind.ONE_POOL, params).dr_cost
    return {"z0": z0, "z1": z1, "ovg_percent": (z0 - z1) / z0 * 100.0 if z0 else 0.0}


def worst_case_expectation(instance: Instance, w, y, params: SolveParams = SolveParams()) -> float:
    """sup over the ambiguity set of E[V] at a fixed staffing.

    Solved from the moment dual with every dual vertex alpha in {c_e, c_x}^J
    written out and gamma, lambda left unbounded.
    """
    J, I = instance.J, instance.I
    if J > MAX_ORACLE_UNITS:
        raise ValueError(f"vertex enumeration limited to {MAX_ORACLE_UNITS} units")
    c = instance.costs
    w = np.asarray(w)
    y = np.asarray(y)
    m = LinearModel("worst_case_fixed")
    gamma = m.add_vars(J, -INF, INF, name="gamma")
    lam = m.add_vars(I, -INF, INF, name="lambda")
    theta = m.add_var(-INF, INF, obj=1.0, name="theta")
    hx = m.add_vars(J, 0.0, INF, name="hinge_x")
    he = m.add_vars(J, 0.0, INF, name="hinge_e")
    sx = m.add_vars(J, -INF, INF, name="sup_x")
    se = m.add_vars(J, -INF, INF, name="sup_e")
    gx = m.add_vars(I, 0.0, INF, name="pool_x")
    ge = m.add_vars(I, 0.0, INF, name="pool_e")
    for j, unit in enumerate(instance.units):
        rho = m.add_vars(len(unit.moments), -INF, INF, obj=list(unit.moments), name=f"rho[{j}]")
        m.set_objective(int(gamma[j]), unit.attendance(int(w[j])))
        for alpha, h, s in ((c.c_x, hx[j], sx[j]), (c.c_e, he[j], se[j])):
            # h >= (-alpha - gamma) w
            m.add_row([h, gamma[j]], [1.0, float(w[j])], -alpha * w[j], INF)
            lo, hi = unit.demand_bounds
            for d in range(lo, hi + 1):
                m.add_row([s, *rho], [1.0] + [float(d) ** (q + 1) for q in range(rho.size)],
                          alpha * d, INF)
    for i, pool in enumerate(instance.pools):
        m.set_objective(int(lam[i]), pool.attendance(int(y[i])))
        for beta, g in ((-c.c_x, gx[i]), (-c.c_e, ge[i])):
            m.add_row([g, lam[i]], [1.0, float(y[i])], beta * y[i], INF)
    M = membership(instance)
    for code in range(1 << J):
        t = np.array([(code >> j) & 1 for j in range(J)], dtype=bool)
        idx = [theta]
        coef = [1.0]
        for j in range(J):
            idx += [int(hx[j]), int(sx[j])] if t[j] else [int(he[j]), int(se[j])]
            coef += [-1.0, -1.0]
        for i in range(I):
            idx.append(int(gx[i]) if t[M[i]].any() else int(ge[i]))
            coef.append(-1.0)
        m.add_row(idx, coef, 0.0, INF)
    out = solve(m, params)
    if not out.ok:
        raise SolveFailure(f"fixed-staffing dual ended with status {out.status.value}")
    return float(out.objective)


def worst_case_primal(instance: Instance, w, y, params: SolveParams = SolveParams()) -> float:
    """The same quantity from the primal side: an LP over probability masses
    on the full finite support of (show-ups, demand)."""
    from .second_stage import recourse_values

    axes = [range(int(wj) + 1) for wj in w] + [range(int(yi) + 1) for yi in y]
    axes += [range(u.demand_bounds[0], u.demand_bounds[1] + 1) for u in instance.units]
    size = int(np.prod([len(a) for a in axes], dtype=float))
    if size > MAX_PRIMAL_SUPPORT:
        raise ValueError(f"support of {size} points exceeds {MAX_PRIMAL_SUPPORT}")
    grid = np.array(list(itertools.product(*axes)), dtype=np.int64).reshape(size, len(axes))
    J, I = instance.J, instance.I
    ws, ys, ds = grid[:, :J], grid[:, J:J + I], grid[:, J + I:]
    vals, _ = recourse_values(instance, ws, ys, ds)
    m = LinearModel("worst_case_primal", sense="max")
    p = m.add_vars(size, 0.0, INF, obj=vals, name="p")
    m.add_row(p, np.ones(size), 1.0, 1.0, "mass")
    for j, unit in enumerate(instance.units):
        m.add_row(p, ws[:, j].astype(float), unit.attendance(int(w[j])), unit.attendance(int(w[j])))
        for q, mu in enumerate(unit.moments, start=1):
            m.add_row(p, ds[:, j].astype(float) ** q, mu, mu)
    for i, pool in enumerate(instance.pools):
        m.add_row(p, ys[:, i].astype(float), pool.attendance(int(y[i])), pool.attendance(int(y[i])))
    out = solve(m, params)
    if not out.ok:
        raise SolveFailure(f"primal moment LP ended with status {out.status.value}")
    return float(out.objective)


def staffing_grid(instance: Instance):
    ranges = [range(u.staffing_bounds[0], u.staffing_bounds[1] + 1) for u in instance.units]
    ranges += [range(p.staffing_bounds[0], p.staffing_bounds[1] + 1) for p in instance.pools]
    for combo in itertools.product(*ranges):
        if instance.resource_cap is not None and sum(combo) > instance.resource_cap:
            continue
        yield combo[:instance.J], combo[instance.J:]


def solve_grid(instance: Instance, params: SolveParams = SolveParams()) -> StaffingSolution:
    """Exhaustive search over staffing levels with the fixed-staffing oracle."""
    require_feasible(instance)
    start = time.perf_counter()
    best = None
    for w, y in staffing_grid(instance):
        val = instance.first_stage_cost(w, y) + worst_case_expectation(instance, w, y, params)
        if best is None or val < best[0] - 1e-12:
            best = (val, w, y)
    if best is None:
        raise SolveFailure("no staffing satisfies the resource cap")
    return _solution(instance, best[1], best[2], best[0], "grid", 0, start)


def evaluate_staffing(instance: Instance, w, y) -> float:
    """First-stage cost plus worst-case expectation at a given staffing."""
    return instance.first_stage_cost(w, y) + worst_case_expectation(instance, w, y)


def attendance_blind(instance: Instance) -> Instance:
    """Copy of the instance in which every scheduled nurse shows up."""
    units = tuple(u.__class__(u.moments, u.demand_bounds, u.staffing_bounds,
                              AttendanceFunction.identity(*u.staffing_bounds))
                  for u in instance.units)
    pools = tuple(PoolSpec(p.members, p.staffing_bounds, AttendanceFunction.identity(*p.staffing_bounds))
                  for p in instance.pools)
    return instance.replace(units=units, pools=pools)

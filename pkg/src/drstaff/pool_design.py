"""Sparse disjoint pool design under a DR cost target.

Units are assigned to at most one of ``n_pools`` candidate pools (a unit
left in the extra "dummy" pool is not pooled at all). The model minimises
the number of cross-trained unit pairs subject to the DR staffing cost of
the resulting design staying below the target. Per-pool copies of the
epigraph variables are switched on and off by the assignment binaries with
a big-M of ``K``.

Candidate pools copy their staffing bounds and attendance from a pool
template (by default the template instance's first pool).
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import INF, LinearModel, SolveParams, Status, solve
from .drns import flexibility_value, require_feasible, solve_monolithic
from .model import Instance, PoolSpec, classify_structure
from .reformulation import CostExpression, add_epigraphs, add_expansion

TARGET_SLACK = 1e-6


class TargetInfeasible(ValueError):
    """No disjoint design reaches the target cost."""


@dataclass(frozen=True)
class PoolDesign:
    assignment: tuple[tuple[int, ...], ...]  # (n_pools + 1) x J, last row is the dummy pool
    open: tuple[bool, ...]
    pairs: tuple[tuple[int, int], ...]
    cross_training_pairs: int
    achieved_dr_cost: float
    target: float
    model_cost: float = float("nan")
    staffing: tuple[tuple[int, ...], tuple[int, ...]] = ((), ())
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def pools(self) -> list[tuple[int, ...]]:
        """Members of every open, non-empty candidate pool."""
        out = []
        for row, is_open in zip(self.assignment[:-1], self.open):
            members = tuple(j for j, a in enumerate(row) if a)
            if is_open and members:
                out.append(members)
        return out


def default_big_m(instance: Instance, target: float, n_pools: int | None = None,
                  template: PoolSpec | None = None) -> float:
    """Bound on every shifted epigraph copy at any point meeting ``target``.

    Shifted epigraphs are nonnegative and each is dominated by its pool's
    theta; the thetas sum to at most the target minus the (bounded below)
    staffing part of the cost.
    """
    tpl = template or pool_template_of(instance)
    n = instance.J // 2 if n_pools is None else int(n_pools)
    c_x = instance.costs.c_x
    shows = sum(u.attendance(u.staffing_bounds[1]) for u in instance.units)
    shows += n * tpl.attendance(tpl.staffing_bounds[1])
    return abs(target) + TARGET_SLACK * (1.0 + abs(target)) + c_x * shows + 1.0


def pool_template_of(instance: Instance) -> PoolSpec:
    if not instance.pools:
        raise ValueError("the template instance needs a pool to copy bounds and attendance from")
    return instance.pools[0]


def design_to_instance(instance: Instance, pools: list[tuple[int, ...]],
                       template: PoolSpec | None = None) -> Instance:
    tpl = template or pool_template_of(instance)
    return instance.replace(pools=tuple(PoolSpec(tuple(sorted(m)), tpl.staffing_bounds,
                                                 tpl.attendance) for m in pools))


def pairs_of(pools: list[tuple[int, ...]]) -> list[tuple[int, int]]:
    return sorted((a, b) for m in pools for k, a in enumerate(sorted(m)) for b in sorted(m)[k + 1:])


def build_opd(instance: Instance, target: float, K: float | None = None,
              n_pools: int | None = None, symmetry: bool = True,
              template: PoolSpec | None = None, encoding: str = "auto"):
    tpl = template or pool_template_of(instance)
    J = instance.J
    n = J // 2 if n_pools is None else int(n_pools)
    if n < 1:
        raise ValueError("need at least one candidate pool")
    K = default_big_m(instance, target, n, tpl) if K is None else float(K)
    c = instance.costs
    cand = instance.replace(pools=tuple(PoolSpec(tuple(range(J)), tpl.staffing_bounds, tpl.attendance)
                                        for _ in range(n)), resource_cap=None)
    m = LinearModel("pool_design")
    ev, unit_cost, pool_costs = add_expansion(m, cand, objective=False, encoding=encoding)
    dv = add_epigraphs(m, cand, dataclasses.replace(ev, lam=np.zeros(0, dtype=np.int64)))
    # eta + rho . mu is >= c mu_1 >= 0 for representable moments and is
    # bounded through the target row, unlike eta itself
    shifted = {}
    for name, src in (("eta_x", dv.eta_x), ("eta_e", dv.eta_e)):
        sh = m.add_vars(J, -INF, INF, name=f"{name}_shifted")
        for j, unit in enumerate(instance.units):
            m.add_row([sh[j], src[j], *ev.rho[j]], [1.0, -1.0, *(-np.asarray(unit.moments))],
                      0.0, 0.0, f"{name}_shift[{j}]")
        shifted[name] = sh

    P = n + 1  # candidate pools plus the dummy
    a = np.array([m.add_vars(J, 0.0, 1.0, integer=True, name=f"a[{i}]") for i in range(P)])
    o = m.add_vars(n, 0.0, 1.0, integer=True, name="open")
    p = {(j, k): m.add_var(0.0, 1.0, integer=True, obj=1.0, name=f"pair[{j},{k}]")
         for j in range(J) for k in range(j + 1, J)}
    # tie-break: among designs with the fewest pairs prefer fewer open pools
    for i in range(n):
        m.add_objective(int(o[i]), 1.0 / (2.0 * (n + 1)))

    for j in range(J):
        m.add_row(a[:, j], np.ones(P), 1.0, 1.0, f"assign[{j}]")
    for i in range(n):
        for j in range(J):
            m.add_row([a[i, j], o[i]], [1.0, -1.0], -INF, 0.0, f"open_link[{i},{j}]")
        for (j, k), var in p.items():
            m.add_row([var, a[i, j], a[i, k]], [1.0, -1.0, -1.0], -1.0, INF, f"pair_link[{i},{j},{k}]")

    zeta = np.array([m.add_vars(J, 0.0, K, name=f"zeta[{i}]") for i in range(P)])
    ex = np.array([m.add_vars(J, -K, K, name=f"eta_x[{i}]") for i in range(P)])
    ee = np.array([m.add_vars(J, -K, K, name=f"eta_e[{i}]") for i in range(P)])
    chi = np.array([m.add_vars(J, -INF, INF, name=f"chi[{i}]") for i in range(P)])
    for j in range(J):
        for src, copies in ((dv.zeta, zeta), (shifted["eta_x"], ex), (shifted["eta_e"], ee)):
            m.add_row([src[j], *copies[:, j]], [1.0] + [-1.0] * P, 0.0, 0.0, f"split[{j}]")
        for i in range(P):
            m.add_row([zeta[i, j], a[i, j]], [1.0, -K], -INF, 0.0, "")
            for var in (ex[i, j], ee[i, j]):
                m.add_row([var, a[i, j]], [1.0, -K], -INF, 0.0, "")
                m.add_row([var, a[i, j]], [1.0, K], 0.0, INF, "")
            m.add_row([chi[i, j], zeta[i, j], ee[i, j]], [1.0, -1.0, -1.0], 0.0, INF, "")
            m.add_row([chi[i, j], ex[i, j]], [1.0, -1.0], 0.0, INF, "")

    hinge = m.add_vars(P, 0.0, INF, name="pool_hinge")
    theta = m.add_vars(P, -INF, INF, name="theta")
    yl = tpl.staffing_bounds[0]
    for i in range(n):
        wt = ev.v_weight[i]
        # hinge >= -c_e y_L o - y_L lambda - sum (nu + c_e v)
        m.add_row([hinge[i], o[i], ev.lam[i], *ev.nu[i], *ev.v[i]],
                  [1.0, c.c_e * yl, float(yl), *wt, *(c.c_e * wt)], 0.0, INF, f"pool_hinge[{i}]")
        m.add_row([ev.lam[i], o[i]], [1.0, c.c_x], 0.0, INF, f"lambda_open[{i}]")
        if ev.v_encoding[i] == "unary":
            if ev.v[i].size:
                m.add_row([ev.v[i][0], o[i]], [1.0, -1.0], -INF, 0.0, f"v_open[{i}]")
        else:
            for b, var in enumerate(ev.v[i]):
                m.add_row([var, o[i]], [1.0, -float(tpl.staffing_bounds[1] - yl)], -INF, 0.0,
                          f"v_open[{i},{b}]")
    for i in range(P):
        for j in range(J):
            idx = [theta[i], ex[i, j], *chi[i, :j], *zeta[i, j + 1:], *ee[i, j + 1:]]
            m.add_row(idx, [1.0] + [-1.0] * (len(idx) - 1), 0.0, INF, f"theta[{i},{j}]")
        idx = [theta[i], hinge[i], *zeta[i], *ee[i]]
        m.add_row(idx, [1.0] + [-1.0] * (len(idx) - 1), 0.0, INF, f"theta_hinge[{i}]")

    # DR cost target; the thetas already carry rho . mu through the shift,
    # and pool constants only count for open pools
    rho_idx = {int(v) for r in ev.rho for v in r}
    staffing_cost = CostExpression(const=unit_cost.const)
    for i, cf in zip(unit_cost.idx, unit_cost.coef):
        if i not in rho_idx:
            staffing_cost.add(i, cf)
    idx = staffing_cost.idx + [int(t) for t in theta]
    coef = staffing_cost.coef + [1.0] * P
    for i, pc in enumerate(pool_costs):
        idx += pc.idx + [int(o[i])]
        coef += pc.coef + [pc.const]
    slack = TARGET_SLACK * (1.0 + abs(target))
    m.add_row(idx, coef, -INF, target - unit_cost.const + slack, "target")

    if instance.resource_cap is not None:
        ridx = [int(v) for u in ev.u for v in u] + [int(v) for u in ev.v for v in u]
        rcoef = [float(w) for wt in ev.u_weight for w in wt] + [float(w) for wt in ev.v_weight for w in wt]
        ridx += [int(v) for v in o]
        rcoef += [float(yl)] * n
        base = sum(u.staffing_bounds[0] for u in instance.units)
        m.add_row(ridx, rcoef, -INF, instance.resource_cap - base, "resource_cap")

    if symmetry:
        for i in range(n - 1):
            m.add_row([o[i], o[i + 1]], [1.0, -1.0], 0.0, INF, f"pool_symmetry[{i}]")
            for j in range(J):
                m.add_row([*a[i, :j], a[i + 1, j]], [1.0] * j + [-1.0], 0.0, INF,
                          f"unit_symmetry[{i},{j}]")
    handles = dict(ev=ev, a=a, o=o, p=p, theta=theta, unit_cost=staffing_cost, pool_costs=pool_costs,
                   n=n, K=K, template=tpl)
    return m, handles


def solve_opd(instance: Instance, target: float, K: float | None = None,
              n_pools: int | None = None, symmetry: bool = True,
              template: PoolSpec | None = None, params: SolveParams = SolveParams(),
              resolve: bool = True, encoding: str = "auto") -> PoolDesign:
    """Fewest cross-training pairs whose disjoint design meets ``target``.

    With ``resolve`` the returned design is re-solved as a concrete
    instance and ``achieved_dr_cost`` is that value; otherwise it is the
    cost the design model itself certifies.
    """
    require_feasible(instance)
    start = time.perf_counter()
    m, h = build_opd(instance, target, K, n_pools, symmetry, template, encoding)
    out = solve(m, params)
    if out.status == Status.INFEASIBLE:
        raise TargetInfeasible(f"no disjoint design reaches the target {target:.6g}")
    if not out.ok:
        raise RuntimeError(f"pool design model ended with status {out.status.value}")
    x = out.x
    a = np.rint(x[h["a"]]).astype(int)
    is_open = tuple(bool(round(v)) for v in x[h["o"]])
    design_pools = [tuple(j for j in range(instance.J) if a[i, j])
                    for i in range(h["n"]) if is_open[i] and a[i].any()]
    pairs = pairs_of(design_pools)
    ev = h["ev"]
    model_cost = h["unit_cost"].value(x) + float(x[h["theta"]].sum())
    for i, pc in enumerate(h["pool_costs"]):
        model_cost += pc.value(x) - pc.const * (1.0 - round(x[h["o"][i]]))
    w, y = ev.staffing(instance.replace(pools=tuple(h["template"] for _ in range(h["n"]))), x)
    achieved = model_cost
    if resolve:
        achieved = solve_monolithic(design_to_instance(instance, design_pools, h["template"]),
                                    params=params).dr_cost
    return PoolDesign(tuple(map(tuple, a.tolist())), is_open, tuple(pairs), len(pairs), achieved,
                      float(target), model_cost, (w, y),
                      extra=dict(K=h["K"], n_pools=h["n"], symmetry=symmetry, gap=out.gap,
                                 mip_gap=params.mip_gap, wall_time=time.perf_counter() - start,
                                 target_slack=TARGET_SLACK))


def _frontier_point(args):
    instance, target, kw = args
    return solve_opd(instance, target, **kw)


def frontier(instance: Instance, points: int, jobs: int = 1, params: SolveParams = SolveParams(),
             **kw) -> list[tuple[float, int, PoolDesign]]:
    """Sweep the target uniformly from full flexibility to no pooling."""
    if points < 2:
        raise ValueError("a frontier needs at least two points")
    flex = flexibility_value(instance.replace(pools=(pool_template_of(instance),)), params)
    targets = np.linspace(flex["z1"], flex["z0"], points)
    tasks = [(instance, float(t), dict(kw, params=params)) for t in targets]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            designs = list(ex.map(_frontier_point, tasks))
    else:
        designs = [_frontier_point(t) for t in tasks]
    return [(float(t), d.cross_training_pairs, d) for t, d in zip(targets, designs)]


def design_to_dict(design: PoolDesign) -> dict:
    return {
        "format": "drstaff-design",
        "assignment": [list(r) for r in design.assignment],
        "open": list(design.open),
        "pools": [list(p) for p in design.pools],
        "pairs": [list(p) for p in design.pairs],
        "cross_training_pairs": design.cross_training_pairs,
        "achieved_dr_cost": design.achieved_dr_cost,
        "model_cost": design.model_cost,
        "target": design.target,
        "staffing": {"w": list(design.staffing[0]), "y": list(design.staffing[1])},
        "extra": design.extra,
    }


def design_from_dict(doc: dict) -> PoolDesign:
    if doc.get("format") != "drstaff-design":
        raise ValueError("not a pool design document")
    return PoolDesign(
        tuple(tuple(int(v) for v in r) for r in doc["assignment"]),
        tuple(bool(v) for v in doc["open"]),
        tuple(tuple(p) for p in doc["pairs"]),
        int(doc["cross_training_pairs"]),
        float(doc["achieved_dr_cost"]),
        float(doc["target"]),
        float(doc.get("model_cost", float("nan"))),
        (tuple(doc["staffing"]["w"]), tuple(doc["staffing"]["y"])),
        extra=doc.get("extra", {}),
    )


def write_design(design: PoolDesign, path: str | Path) -> None:
    Path(path).write_text(json.dumps(design_to_dict(design), indent=1) + "\n")


def read_design(path: str | Path) -> PoolDesign:
    return design_from_dict(json.loads(Path(path).read_text()))


def structure_of(instance: Instance, design: PoolDesign) -> str:
    return classify_structure(design_to_instance(instance, design.pools)).value

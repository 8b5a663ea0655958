"""Second-stage recourse: reassign pool nurses, then hire temporaries.

Given show-ups and demand, the recourse cost is

    V = min  sum_j c_x x_j - c_e e_j
        s.t. sum_{i: j in P_i} z_ij + x_j - e_j = d_j - w_show_j
             sum_{j in P_i} z_ij <= y_show_i,   z, x, e >= 0 integer.

The constraint matrix is totally unimodular, so the LP relaxation is
exact. ``recourse_dual`` and ``recourse_bruteforce`` are independent
routes to the same number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .backend import INF, LinearModel, SolveParams, Status, solve
from .model import Instance


class NonIntegralVertex(RuntimeError):
    """The recourse LP returned a fractional vertex (should be impossible)."""


@dataclass(frozen=True)
class Scenario:
    w_show: tuple[int, ...]
    y_show: tuple[int, ...]
    demand: tuple[int, ...]

    @property
    def shortage(self) -> np.ndarray:
        return np.asarray(self.demand, dtype=np.int64) - np.asarray(self.w_show, dtype=np.int64)


@dataclass
class RecourseResult:
    value: float
    z: dict[tuple[int, int], int]
    x: np.ndarray
    e: np.ndarray


def membership(instance: Instance) -> np.ndarray:
    """(I, J) boolean matrix of pool membership."""
    M = np.zeros((instance.I, instance.J), dtype=bool)
    for i, p in enumerate(instance.pools):
        M[i, list(p.members)] = True
    return M


def check_scenario(instance: Instance, staffing: tuple[Sequence[int], Sequence[int]],
                   scenario: Scenario) -> None:
    w, y = staffing
    ws, ys, d = (np.asarray(a) for a in (scenario.w_show, scenario.y_show, scenario.demand))
    if ws.shape != (instance.J,) or d.shape != (instance.J,) or ys.shape != (instance.I,):
        raise ValueError("scenario dimensions do not match the instance")
    if (ws < 0).any() or (ws > np.asarray(w)).any():
        raise ValueError("unit show-ups outside [0, w]")
    if (ys < 0).any() or (ys > np.asarray(y)).any():
        raise ValueError("pool show-ups outside [0, y]")
    lo = np.array([u.demand_bounds[0] for u in instance.units])
    hi = np.array([u.demand_bounds[1] for u in instance.units])
    if (d < lo).any() or (d > hi).any():
        raise ValueError("demand outside its bounds")


def recourse_lp(instance: Instance, staffing, scenario: Scenario,
                params: SolveParams = SolveParams(), tol: float = 1e-6) -> RecourseResult:
    check_scenario(instance, staffing, scenario)
    c = instance.costs
    J = instance.J
    m = LinearModel("recourse")
    x = m.add_vars(J, 0.0, INF, obj=c.c_x, name="x")
    e = m.add_vars(J, 0.0, INF, obj=-c.c_e, name="e")
    zvars: dict[tuple[int, int], int] = {}
    for i, pool in enumerate(instance.pools):
        for j in pool.members:
            zvars[i, j] = m.add_var(0.0, INF, name=f"z[{i},{j}]")
    short = scenario.shortage
    for j in range(J):
        idx = [x[j], e[j]] + [v for (i, jj), v in zvars.items() if jj == j]
        coef = [1.0, -1.0] + [1.0] * (len(idx) - 2)
        m.add_row(idx, coef, float(short[j]), float(short[j]), f"cover[{j}]")
    for i, pool in enumerate(instance.pools):
        idx = [zvars[i, j] for j in pool.members]
        m.add_row(idx, [1.0] * len(idx), -INF, float(scenario.y_show[i]), f"pool[{i}]")
    out = solve(m, params)
    if out.status != Status.OPTIMAL:
        raise RuntimeError(f"recourse LP ended with status {out.status.value}")
    vals = out.x
    rounded = np.rint(vals)
    if np.abs(vals - rounded).max(initial=0.0) > tol:
        raise NonIntegralVertex(f"fractional recourse vertex, max deviation "
                                f"{np.abs(vals - rounded).max():.3g}")
    xs = rounded[x].astype(np.int64)
    es = rounded[e].astype(np.int64)
    zs = {k: int(rounded[v]) for k, v in zvars.items()}
    value = float(c.c_x * xs.sum() - c.c_e * es.sum())
    return RecourseResult(value, zs, xs, es)


def recourse_dual(instance: Instance, staffing, scenario: Scenario) -> float:
    """Max over the dual vertices alpha in {c_e, c_x}^J, beta_i = -max_{P_i} alpha."""
    check_scenario(instance, staffing, scenario)
    if instance.J > _kernels.MAX_DUAL_ENUM_UNITS:
        raise ValueError(f"dual enumeration limited to {_kernels.MAX_DUAL_ENUM_UNITS} units")
    short = scenario.shortage[None, :]
    ys = np.asarray(scenario.y_show, dtype=np.int64).reshape(1, instance.I)
    vals, _ = _kernels._recourse_dual_numpy(short, ys, membership(instance),
                                           instance.costs.c_x, instance.costs.c_e)
    return float(vals[0])


def recourse_bruteforce(instance: Instance, staffing, scenario: Scenario, cap: int) -> float:
    """Exhaustive minimum over integer reassignments, each coordinate <= cap."""
    check_scenario(instance, staffing, scenario)
    if cap < max(u.demand_bounds[1] for u in instance.units):
        raise ValueError("cap must dominate every demand upper bound")
    ys = np.asarray(scenario.y_show, dtype=np.int64)
    if ys.size and ys.max() > cap:
        raise ValueError("cap must dominate every pool show-up count")
    pairs = [(i, j) for i, p in enumerate(instance.pools) for j in p.members]
    return _kernels.recourse_bruteforce(
        scenario.shortage, ys,
        np.array([i for i, _ in pairs], dtype=np.int64),
        np.array([j for _, j in pairs], dtype=np.int64),
        instance.costs.c_x, instance.costs.c_e,
    )


def recourse_values(instance: Instance, w_show: np.ndarray, y_show: np.ndarray,
                    demand: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised exact recourse for many scenarios: (values, temporaries)."""
    short = np.asarray(demand, dtype=np.int64) - np.asarray(w_show, dtype=np.int64)
    return _kernels.recourse_batch(short, y_show, membership(instance),
                                   instance.costs.c_x, instance.costs.c_e)

"""Calibration from raw records and out-of-sample simulation.

Demands are drawn from a log-normal distribution with the unit's demand
mean and standard deviation (moment matched on the natural scale), rounded
to the nearest integer and clamped to the demand support. Show-ups are
binomial in the scheduled staff with the attendance rate. Show-ups are
generated from stored uniforms through the binomial quantile function, so
two staffings evaluated on the same batch see common random numbers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .backend import SolveParams
from .drns import attendance_blind, solve_drns
from .model import AttendanceFunction, Instance, UnitSpec
from .second_stage import Scenario, recourse_values

CHUNK = 8192


# ------------------------------------------------------------- calibration

def empirical_moments(demands: Sequence[float], Q: int = 2) -> tuple[float, ...]:
    d = np.asarray(demands, dtype=float)
    if d.size == 0:
        raise ValueError("empty demand history")
    if Q < 1:
        raise ValueError("Q must be at least 1")
    return tuple(float(np.mean(d ** q)) for q in range(1, Q + 1))


@dataclass
class AttendanceRecords:
    """(staff level, showed up) pairs per unit and pool, and demand histories."""

    units: list[list[tuple[int, int]]]
    pools: list[list[tuple[int, int]]] = field(default_factory=list)
    demands: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        for name, group in (("unit", self.units), ("pool", self.pools)):
            for k, recs in enumerate(group):
                if not recs:
                    raise ValueError(f"{name} {k} has no attendance records")
                for level, shown in recs:
                    if not 0 <= shown <= level:
                        raise ValueError(f"{name} {k}: show-ups {shown} outside [0, {level}]")


def fit_attendance(records: Sequence[tuple[int, int]], lower: int, upper: int) -> AttendanceFunction:
    """Piecewise-linear attendance with breakpoints at the observed levels.

    Observed levels take their mean show-up count; the origin is pinned at
    zero; other levels are interpolated, and levels above the largest
    observation continue the last segment's slope. Values are clamped to
    [0, level].
    """
    if not records:
        raise ValueError("no attendance records")
    if lower < 0 or upper < lower:
        raise ValueError("invalid staffing range")
    rec = np.asarray(records, dtype=float).reshape(-1, 2)
    levels, inverse = np.unique(rec[:, 0], return_inverse=True)
    means = np.bincount(inverse, weights=rec[:, 1]) / np.bincount(inverse)
    if levels[0] > 0:
        levels = np.concatenate([[0.0], levels])
        means = np.concatenate([[0.0], means])
    else:
        means[0] = 0.0
    grid = np.arange(lower, upper + 1, dtype=float)
    vals = np.interp(grid, levels, means)
    if levels.size >= 2:
        slope = (means[-1] - means[-2]) / (levels[-1] - levels[-2])
        above = grid > levels[-1]
        vals[above] = means[-1] + slope * (grid[above] - levels[-1])
    vals = np.clip(vals, 0.0, grid)
    return AttendanceFunction(int(lower), tuple(float(v) for v in vals))


def calibrate_unit(demands: Sequence[int], records: Sequence[tuple[int, int]],
                   staffing_bounds: tuple[int, int], Q: int = 2,
                   demand_bounds: tuple[int, int] | None = None) -> UnitSpec:
    """Unit specification from a demand history and attendance records."""
    moments = empirical_moments(demands, Q)
    if demand_bounds is None:
        demand_bounds = (int(min(demands)), int(max(demands)))
    return UnitSpec(moments, demand_bounds, staffing_bounds,
                    fit_attendance(records, *staffing_bounds))


# --------------------------------------------------------------- sampling

def lognormal_params(mean: float, sd: float) -> tuple[float, float]:
    """Log-scale (location, scale) for a log-normal with this mean and sd."""
    if mean <= 0:
        return -math.inf, 0.0
    sigma2 = math.log1p((sd / mean) ** 2)
    return math.log(mean) - sigma2 / 2, math.sqrt(sigma2)


def _rates(instance: Instance, rates) -> tuple[np.ndarray, np.ndarray]:
    if rates is not None:
        ru, rp = rates
        return np.asarray(ru, dtype=float), np.asarray(rp, dtype=float)
    out = []
    for group, name in ((instance.units, "unit"), (instance.pools, "pool")):
        r = []
        for k, s in enumerate(group):
            a = s.attendance.rate()
            if a is None:
                raise ValueError(f"{name} {k} attendance is not a constant rate; "
                                 "pass explicit rates for binomial sampling")
            r.append(a)
        out.append(np.asarray(r, dtype=float))
    return out[0], out[1]


@dataclass
class ScenarioBatch:
    seed: int
    staffing: tuple[tuple[int, ...], tuple[int, ...]]
    demand: np.ndarray        # (n, J)
    w_show: np.ndarray        # (n, J)
    y_show: np.ndarray        # (n, I)
    uniforms_w: np.ndarray    # (n, J) uniforms behind the unit show-ups
    uniforms_y: np.ndarray    # (n, I)
    rates: tuple[np.ndarray, np.ndarray]
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.demand.shape[0]

    def scenarios(self):
        for k in range(self.n):
            yield Scenario(tuple(int(v) for v in self.w_show[k]), tuple(int(v) for v in self.y_show[k]),
                           tuple(int(v) for v in self.demand[k]))

    def for_staffing(self, staffing) -> "ScenarioBatch":
        """Same demands and uniforms, show-ups re-drawn for another staffing."""
        w, y = (tuple(int(v) for v in s) for s in staffing)
        ws, ys = _show_ups(self.uniforms_w, self.uniforms_y, w, y, self.rates)
        return ScenarioBatch(self.seed, (w, y), self.demand, ws, ys, self.uniforms_w,
                             self.uniforms_y, self.rates, dict(self.metadata))


def _show_ups(uw, uy, w, y, rates):
    ru, rp = rates
    ws = stats.binom.ppf(uw, np.asarray(w), ru).astype(np.int64) if uw.size else \
        np.zeros(uw.shape, np.int64)
    ys = stats.binom.ppf(uy, np.asarray(y), rp).astype(np.int64) if uy.size else \
        np.zeros(uy.shape, np.int64)
    return ws, ys


def _draw_chunk(seq: np.random.SeedSequence, n: int, J: int, I: int, loc, scale, lo, hi):
    rng = np.random.default_rng(seq)
    z = rng.standard_normal((n, J))
    raw = np.exp(loc + scale * z)
    demand = np.clip(np.rint(raw), lo, hi).astype(np.int64)
    # strictly inside (0, 1) so the quantile function stays finite
    uw = np.clip(rng.random((n, J)), 1e-16, 1 - 1e-16)
    uy = np.clip(rng.random((n, I)), 1e-16, 1 - 1e-16)
    return demand, uw, uy


def sample_scenarios(instance: Instance, staffing, n: int, seed: int,
                     rates: tuple[Sequence[float], Sequence[float]] | None = None) -> ScenarioBatch:
    """``n`` scenarios for ``staffing``, deterministic in ``seed``.

    Draws are made in chunks of fixed size, each from its own child of
    ``SeedSequence(seed)``, so the batch does not depend on how evaluation
    is parallelised.
    """
    if n < 1:
        raise ValueError("need at least one scenario")
    ru, rp = _rates(instance, rates)
    J, I = instance.J, instance.I
    params = [lognormal_params(u.mean, u.sd) for u in instance.units]
    loc = np.array([p[0] for p in params])
    scale = np.array([p[1] for p in params])
    lo = np.array([u.demand_bounds[0] for u in instance.units])
    hi = np.array([u.demand_bounds[1] for u in instance.units])
    n_chunks = -(-n // CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    parts = [_draw_chunk(children[k], min(CHUNK, n - k * CHUNK), J, I, loc, scale, lo, hi)
             for k in range(n_chunks)]
    demand = np.concatenate([p[0] for p in parts])
    uw = np.concatenate([p[1] for p in parts])
    uy = np.concatenate([p[2] for p in parts])
    w, y = (tuple(int(v) for v in s) for s in staffing)
    ws, ys = _show_ups(uw, uy, w, y, (ru, rp))
    meta = {"demand": "log-normal, moment matched, rounded and clamped to the support",
            "show_ups": "binomial(staff, rate) via quantile of stored uniforms",
            "chunk": CHUNK, "lognormal_loc": loc.tolist(), "lognormal_scale": scale.tolist(),
            "unit_rates": ru.tolist(), "pool_rates": rp.tolist()}
    return ScenarioBatch(int(seed), (w, y), demand, ws, ys, uw, uy, (ru, rp), meta)


# -------------------------------------------------------------- evaluation

@dataclass
class OutOfSampleReport:
    avg_cost: float
    avg_temporaries: float
    first_stage_cost: float
    half_width: float
    values: np.ndarray = field(repr=False)
    temporaries: np.ndarray = field(repr=False)
    seed: int = 0

    def to_dict(self, per_scenario: bool = False) -> dict:
        out = {"avg_cost": self.avg_cost, "avg_temporaries": self.avg_temporaries,
               "first_stage_cost": self.first_stage_cost, "half_width_95": self.half_width,
               "n": int(self.values.size), "seed": self.seed}
        if per_scenario:
            out["values"] = self.values.tolist()
            out["temporaries"] = self.temporaries.tolist()
        return out


def _recourse_chunk(args):
    instance, ws, ys, d = args
    return recourse_values(instance, ws, ys, d)


def out_of_sample(instance: Instance, staffing, batch: ScenarioBatch, jobs: int = 1) -> OutOfSampleReport:
    w, y = (tuple(int(v) for v in s) for s in staffing)
    if (w, y) != batch.staffing:
        raise ValueError("batch was generated for a different staffing; use batch.for_staffing")
    tasks = [(instance, batch.w_show[k:k + CHUNK], batch.y_show[k:k + CHUNK], batch.demand[k:k + CHUNK])
             for k in range(0, batch.n, CHUNK)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_recourse_chunk, tasks))
    else:
        parts = [_recourse_chunk(t) for t in tasks]
    values = np.concatenate([p[0] for p in parts])
    temps = np.concatenate([p[1] for p in parts]).reshape(batch.n, -1).sum(axis=1)
    fsc = instance.first_stage_cost(w, y)
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return OutOfSampleReport(fsc + float(values.mean()), float(temps.mean()), fsc,
                             1.96 * sd / math.sqrt(values.size), values, temps, batch.seed)


def absenteeism_experiment(instance: Instance, n: int, seed: int,
                           params: SolveParams = SolveParams()) -> dict:
    """Absenteeism-aware vs absenteeism-blind staffing on common scenarios."""
    aware, _ = solve_drns(instance, params=params)
    blind, _ = solve_drns(attendance_blind(instance), params=params)
    batch = sample_scenarios(instance, (aware.w, aware.y), n, seed)
    rep_abs = out_of_sample(instance, (aware.w, aware.y), batch)
    rep_wo = out_of_sample(instance, (blind.w, blind.y), batch.for_staffing((blind.w, blind.y)))
    return {"z_abs": rep_abs.avg_cost, "z_wo": rep_wo.avg_cost,
            "x_abs": rep_abs.avg_temporaries, "x_wo": rep_wo.avg_temporaries,
            "w_abs": list(aware.w), "y_abs": list(aware.y),
            "w_wo": list(blind.w), "y_wo": list(blind.y), "seed": seed, "samples": n}


# ------------------------------------------------------------------- files

def batch_to_dict(batch: ScenarioBatch) -> dict:
    return {"format": "drstaff-batch", "seed": batch.seed,
            "staffing": {"w": list(batch.staffing[0]), "y": list(batch.staffing[1])},
            "demand": batch.demand.tolist(), "w_show": batch.w_show.tolist(),
            "y_show": batch.y_show.tolist(), "metadata": batch.metadata}


def write_batch(batch: ScenarioBatch, path: str | Path) -> None:
    Path(path).write_text(json.dumps(batch_to_dict(batch)) + "\n")


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=1) + "\n")

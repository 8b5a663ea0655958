"""Thin model builder over the HiGHS LP/MILP engine.

Environment variables
---------------------
DRSTAFF_SOLVER
    Engine selector, ``highs`` or ``highs:<threads>``. HiGHS is the only
    engine bundled.
DRSTAFF_LP_DUMP
    Directory; when set, every model is written there in LP format before
    it is solved.
"""

from __future__ import annotations

import enum
import itertools
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

try:
    import highspy
except ImportError:  # pragma: no cover - exercised only without the engine
    highspy = None

INF = float("inf")
_dump_counter = itertools.count()


class BackendError(RuntimeError):
    pass


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    LIMIT = "Limit"


@dataclass(frozen=True)
class SolveParams:
    time_limit: float | None = None
    mip_gap: float = 1e-9
    feasibility_tol: float = 1e-7
    threads: int | None = None
    seed: int = 0


DEFAULT_PARAMS = SolveParams()


@dataclass
class SolveOutcome:
    status: Status
    objective: float | None
    x: np.ndarray | None
    row_duals: np.ndarray | None = None
    col_duals: np.ndarray | None = None
    gap: float | None = None
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL


class LinearModel:
    """Variables, a linear objective and ranged rows ``lo <= a.x <= hi``."""

    def __init__(self, name: str = "model", sense: str = "min"):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.name = name
        self.sense = sense
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.is_int: list[bool] = []
        self.obj: list[float] = []
        self.var_names: list[str] = []
        self.obj_offset = 0.0
        self._row_idx: list[np.ndarray] = []
        self._row_val: list[np.ndarray] = []
        self.row_lo: list[float] = []
        self.row_hi: list[float] = []
        self.row_names: list[str] = []

    @property
    def num_vars(self) -> int:
        return len(self.lb)

    @property
    def num_rows(self) -> int:
        return len(self.row_lo)

    def add_var(self, lb: float = 0.0, ub: float = INF, integer: bool = False,
                obj: float = 0.0, name: str | None = None) -> int:
        if lb > ub:
            raise ValueError(f"variable {name}: lower bound {lb} above upper bound {ub}")
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.is_int.append(bool(integer))
        self.obj.append(float(obj))
        self.var_names.append(name or f"x{len(self.lb) - 1}")
        return len(self.lb) - 1

    def add_vars(self, n: int, lb: float = 0.0, ub: float = INF, integer: bool = False,
                 obj: float | Sequence[float] = 0.0, name: str = "x") -> np.ndarray:
        objs = np.broadcast_to(np.asarray(obj, dtype=float), (n,))
        return np.array([self.add_var(lb, ub, integer, float(objs[k]), f"{name}[{k}]")
                         for k in range(n)], dtype=np.int64)

    def add_binary(self, obj: float = 0.0, name: str | None = None) -> int:
        return self.add_var(0.0, 1.0, True, obj, name)

    def set_objective(self, var: int, coef: float) -> None:
        self.obj[var] = float(coef)

    def add_objective(self, var: int, coef: float) -> None:
        self.obj[var] += float(coef)

    def add_row(self, idx: Sequence[int], coef: Sequence[float], lo: float = -INF,
                hi: float = INF, name: str | None = None) -> int:
        idx = np.asarray(idx, dtype=np.int64)
        val = np.asarray(coef, dtype=float)
        if idx.shape != val.shape:
            raise ValueError("index and coefficient arrays differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_vars):
            raise ValueError(f"row {name}: references an unknown variable")
        if lo > hi:
            raise ValueError(f"row {name}: empty range")
        self._row_idx.append(idx)
        self._row_val.append(val)
        self.row_lo.append(float(lo))
        self.row_hi.append(float(hi))
        self.row_names.append(name or f"r{len(self.row_lo) - 1}")
        return len(self.row_lo) - 1

    def add_constraint(self, idx, coef, sense: str, rhs: float, name: str | None = None) -> int:
        if sense == "<=":
            return self.add_row(idx, coef, -INF, rhs, name)
        if sense == ">=":
            return self.add_row(idx, coef, rhs, INF, name)
        if sense == "==":
            return self.add_row(idx, coef, rhs, rhs, name)
        raise ValueError(f"unknown comparator {sense!r}")

    def matrix(self) -> sp.csc_matrix:
        if not self._row_idx:
            return sp.csc_matrix((0, self.num_vars))
        rows = np.concatenate([np.full(len(ix), r) for r, ix in enumerate(self._row_idx)])
        cols = np.concatenate(self._row_idx)
        vals = np.concatenate(self._row_val)
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.num_rows, self.num_vars))

    def evaluate_objective(self, x: np.ndarray) -> float:
        return float(np.dot(self.obj, x)) + self.obj_offset

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.matrix() @ x

    def is_mip(self) -> bool:
        return any(self.is_int)


def _engine_config(params: SolveParams) -> SolveParams:
    spec = os.environ.get("DRSTAFF_SOLVER", "highs").strip().lower()
    engine, _, threads = spec.partition(":")
    if engine != "highs":
        raise BackendError(f"unknown engine {engine!r} in DRSTAFF_SOLVER; only 'highs' is available")
    if threads and params.threads is None:
        return SolveParams(params.time_limit, params.mip_gap, params.feasibility_tol,
                           int(threads), params.seed)
    return params


def _to_highs(model: LinearModel) -> "highspy.HighsLp":
    lp = highspy.HighsLp()
    lp.num_col_ = model.num_vars
    lp.num_row_ = model.num_rows
    lp.col_cost_ = np.asarray(model.obj, dtype=float)
    lp.col_lower_ = np.asarray(model.lb, dtype=float)
    lp.col_upper_ = np.asarray(model.ub, dtype=float)
    lp.row_lower_ = np.asarray(model.row_lo, dtype=float)
    lp.row_upper_ = np.asarray(model.row_hi, dtype=float)
    lp.offset_ = model.obj_offset
    lp.sense_ = highspy.ObjSense.kMaximize if model.sense == "max" else highspy.ObjSense.kMinimize
    A = model.matrix()
    A.sort_indices()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data
    lp.a_matrix_.num_col_ = model.num_vars
    lp.a_matrix_.num_row_ = model.num_rows
    if model.is_mip():
        lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous
                           for f in model.is_int]
    lp.col_names_ = model.var_names
    lp.row_names_ = model.row_names
    return lp


def solve(model: LinearModel, params: SolveParams = DEFAULT_PARAMS) -> SolveOutcome:
    """Solve with HiGHS. Duals are returned for pure LPs solved to optimality."""
    if highspy is None:
        raise BackendError("the HiGHS engine (package 'highspy') is not installed")
    params = _engine_config(params)
    start = time.perf_counter()
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("random_seed", int(params.seed))
    h.setOptionValue("primal_feasibility_tolerance", params.feasibility_tol)
    h.setOptionValue("dual_feasibility_tolerance", params.feasibility_tol)
    h.setOptionValue("mip_feasibility_tolerance", params.feasibility_tol)
    h.setOptionValue("mip_rel_gap", params.mip_gap)
    h.setOptionValue("mip_abs_gap", 1e-9)
    if params.time_limit is not None:
        h.setOptionValue("time_limit", float(params.time_limit))
    if params.threads is not None:
        h.setOptionValue("threads", int(params.threads))
    status = h.passModel(_to_highs(model))
    if status == highspy.HighsStatus.kError:
        raise BackendError(f"HiGHS rejected model {model.name!r}")
    dump_dir = os.environ.get("DRSTAFF_LP_DUMP")
    if dump_dir:
        Path(dump_dir).mkdir(parents=True, exist_ok=True)
        h.writeModel(str(Path(dump_dir) / f"{model.name}_{next(_dump_counter):05d}.lp"))
    h.run()
    ms = h.getModelStatus()
    if ms == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        # presolve could not tell which; rerun without it to classify
        h.setOptionValue("presolve", "off")
        h.run()
        ms = h.getModelStatus()
    wall = time.perf_counter() - start
    info = h.getInfo()
    S = highspy.HighsModelStatus
    mip = model.is_mip()
    if ms == S.kOptimal:
        st = Status.OPTIMAL
    elif ms == S.kInfeasible:
        st = Status.INFEASIBLE
    elif ms in (S.kUnbounded, S.kUnboundedOrInfeasible):
        st = Status.UNBOUNDED
    elif ms in (S.kTimeLimit, S.kIterationLimit, S.kSolutionLimit, S.kInterrupt,
                S.kObjectiveBound, S.kObjectiveTarget):
        st = Status.LIMIT
    else:
        raise BackendError(f"HiGHS returned status {h.modelStatusToString(ms)} on {model.name!r}")

    sol = h.getSolution()
    have_primal = st == Status.OPTIMAL or (st == Status.LIMIT and sol.value_valid)
    x = np.asarray(sol.col_value, dtype=float) if have_primal else None
    objective = float(info.objective_function_value) if have_primal else None
    row_duals = col_duals = None
    if st == Status.OPTIMAL and not mip and sol.dual_valid:
        row_duals = np.asarray(sol.row_dual, dtype=float)
        col_duals = np.asarray(sol.col_dual, dtype=float)
    gap = float(info.mip_gap) if mip and have_primal else (0.0 if have_primal else None)
    return SolveOutcome(st, objective, x, row_duals, col_duals, gap, wall)

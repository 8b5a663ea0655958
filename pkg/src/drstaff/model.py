"""Domain types, validation, instance files and the random instance generator."""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1


class InstanceFormatError(ValueError):
    """Raised when an instance or solution file cannot be parsed."""


@dataclass(frozen=True)
class CostParams:
    """Per-shift costs: unit nurse, pool nurse, temporary nurse, and the
    benefit credited for each excess nurse."""

    c_w: float
    c_y: float
    c_x: float
    c_e: float


@dataclass(frozen=True)
class AttendanceFunction:
    """Expected number of nurses who show up, tabulated on an integer range.

    ``values[k]`` is the expectation when ``base_level + k`` nurses are
    scheduled.
    """

    base_level: int
    values: tuple[float, ...]

    @property
    def upper_level(self) -> int:
        return self.base_level + len(self.values) - 1

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @property
    def increments(self) -> np.ndarray:
        """Increments v[k] - v[k-1] for k = 1..U-L."""
        return np.diff(self.array)

    def __call__(self, level: int) -> float:
        k = int(level) - self.base_level
        if k < 0 or k >= len(self.values):
            raise ValueError(f"level {level} outside [{self.base_level}, {self.upper_level}]")
        return self.values[k]

    @classmethod
    def linear(cls, rate: float, lower: int, upper: int) -> "AttendanceFunction":
        return cls(int(lower), tuple(float(rate) * k for k in range(lower, upper + 1)))

    @classmethod
    def identity(cls, lower: int, upper: int) -> "AttendanceFunction":
        return cls(int(lower), tuple(float(k) for k in range(lower, upper + 1)))

    def rate(self, rtol: float = 1e-9) -> float | None:
        """Constant show-up rate if the function is linear through the origin."""
        levels = np.arange(self.base_level, self.upper_level + 1, dtype=float)
        vals = self.array
        positive = levels > 0
        if not positive.any():
            return 1.0
        ratios = vals[positive] / levels[positive]
        a = float(ratios[-1])
        if np.allclose(ratios, a, rtol=rtol, atol=1e-12):
            return a
        return None


@dataclass(frozen=True)
class UnitSpec:
    moments: tuple[float, ...]
    demand_bounds: tuple[int, int]
    staffing_bounds: tuple[int, int]
    attendance: AttendanceFunction

    @property
    def mean(self) -> float:
        return self.moments[0]

    @property
    def sd(self) -> float:
        if len(self.moments) < 2:
            raise ValueError("standard deviation needs the second moment")
        return math.sqrt(max(self.moments[1] - self.moments[0] ** 2, 0.0))


@dataclass(frozen=True)
class PoolSpec:
    members: tuple[int, ...]
    staffing_bounds: tuple[int, int]
    attendance: AttendanceFunction


@dataclass(frozen=True)
class Instance:
    units: tuple[UnitSpec, ...]
    pools: tuple[PoolSpec, ...]
    costs: CostParams
    resource_cap: int | None = None
    label: str = ""

    @property
    def J(self) -> int:
        return len(self.units)

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.pools)

    def replace(self, **changes) -> "Instance":
        return dataclasses.replace(self, **changes)

    def first_stage_cost(self, w: Sequence[int], y: Sequence[int]) -> float:
        return self.costs.c_w * float(np.sum(w)) + self.costs.c_y * float(np.sum(y))


class PoolStructureKind(str, enum.Enum):
    NO_POOL = "NoPool"
    ONE_POOL = "OnePool"
    DISJOINT = "Disjoint"
    CHAINED = "Chained"
    ARBITRARY = "Arbitrary"


@dataclass(frozen=True)
class StaffingSolution:
    w: tuple[int, ...]
    y: tuple[int, ...]
    dr_cost: float
    first_stage_cost: float
    worst_case_expectation: float
    method: str
    cuts_used: int = 0
    wall_time: float = 0.0
    status: str = "optimal"
    extra: dict = field(default_factory=dict, compare=False, hash=False)


def _check_attendance(path: str, att: AttendanceFunction, lower: int, upper: int) -> list[str]:
    out = []
    if att.base_level != lower or att.upper_level != upper:
        out.append(f"{path}: tabulated range [{att.base_level}, {att.upper_level}] "
                   f"does not match staffing bounds [{lower}, {upper}]")
    for k, v in enumerate(att.values):
        level = att.base_level + k
        if not math.isfinite(v):
            out.append(f"{path}.values[{k}]: not finite")
        elif v < 0 or v > level:
            out.append(f"{path}.values[{k}]: expected show-ups {v} outside [0, {level}]")
    if att.base_level == 0 and att.values and att.values[0] != 0:
        out.append(f"{path}.values[0]: must be 0 at level 0")
    return out


def validate(instance: Instance) -> list[str]:
    """Return every invariant violation, ordered by field path."""
    out: list[str] = []
    c = instance.costs
    for name in ("c_w", "c_y", "c_x", "c_e"):
        val = getattr(c, name)
        if not (math.isfinite(val) and val >= 0):
            out.append(f"costs.{name}: CostParams requires a nonnegative finite value")
    if not (0 <= c.c_e < c.c_x):
        out.append("costs: CostParams requires 0 <= c_e < c_x")

    J = instance.J
    for j, u in enumerate(instance.units):
        p = f"units[{j}]"
        if len(u.moments) < 1:
            out.append(f"{p}.moments: need at least one moment")
        elif len(u.moments) >= 2 and u.moments[1] < u.moments[0] ** 2 - 1e-9 * max(1.0, u.moments[0] ** 2):
            out.append(f"{p}.moments: second moment below squared mean")
        dl, du = u.demand_bounds
        if not 0 <= dl <= du:
            out.append(f"{p}.demand_bounds: need 0 <= d_L <= d_U")
        wl, wu = u.staffing_bounds
        if not 0 <= wl <= wu:
            out.append(f"{p}.staffing_bounds: need 0 <= w_L <= w_U")
        else:
            out.extend(_check_attendance(f"{p}.attendance", u.attendance, wl, wu))

    for i, pool in enumerate(instance.pools):
        p = f"pools[{i}]"
        m = pool.members
        if not m:
            out.append(f"{p}.members: PoolSpec.members must be nonempty")
        if any(b <= a for a, b in zip(m, m[1:])):
            out.append(f"{p}.members: PoolSpec.members must be strictly increasing")
        bad = [k for k in m if k < 0 or k >= J]
        if bad:
            out.append(f"{p}.members: PoolSpec.members has out-of-range unit index {bad}")
        yl, yu = pool.staffing_bounds
        if not 0 <= yl <= yu:
            out.append(f"{p}.staffing_bounds: need 0 <= y_L <= y_U")
        else:
            out.extend(_check_attendance(f"{p}.attendance", pool.attendance, yl, yu))

    if instance.resource_cap is not None:
        floor = sum(u.staffing_bounds[0] for u in instance.units)
        floor += sum(q.staffing_bounds[0] for q in instance.pools)
        if floor > instance.resource_cap:
            out.append(f"resource_cap: lower staffing bounds sum to {floor} > {instance.resource_cap}")
    return out


def chain_members(J: int) -> list[tuple[int, ...]]:
    """Pools {i, i+1} with the last one wrapping to unit 0."""
    return [tuple(sorted((i, (i + 1) % J))) for i in range(J)]


def classify_structure(instance: Instance) -> PoolStructureKind:
    J, pools = instance.J, instance.pools
    if not pools or all(p.staffing_bounds[1] == 0 for p in pools):
        return PoolStructureKind.NO_POOL
    if len(pools) == 1 and pools[0].members == tuple(range(J)):
        return PoolStructureKind.ONE_POOL
    if J >= 3 and len(pools) == J and [p.members for p in pools] == chain_members(J):
        return PoolStructureKind.CHAINED
    seen: set[int] = set()
    for p in pools:
        if seen.intersection(p.members):
            return PoolStructureKind.ARBITRARY
        seen.update(p.members)
    return PoolStructureKind.DISJOINT


def demand_box(mean: float, sd: float) -> tuple[int, int]:
    return max(0, math.floor(mean - 3 * sd)), math.ceil(mean + 3 * sd)


def representable_demand(mean: float, sd: float) -> tuple[float, tuple[int, int]]:
    """Variance and integer support for which (mean, variance) is attainable.

    Starts from the 3-sigma box. An integer-valued variable cannot have
    variance below frac(mean)(1 - frac(mean)), and a variable on [lo, hi]
    cannot exceed (hi - mean)(mean - lo); both are repaired minimally.
    """
    var = sd * sd
    frac = mean - math.floor(mean)
    var = max(var, frac * (1 - frac))
    lo, hi = demand_box(mean, math.sqrt(var))
    if mean > lo and (hi - mean) * (mean - lo) < var:
        hi = math.ceil(mean + var / (mean - lo))
    return var, (lo, hi)


def make_unit(mean: float, sd: float, rate: float, w_bounds: tuple[int, int]) -> UnitSpec:
    var, (lo, hi) = representable_demand(mean, sd)
    wl, wu = w_bounds
    return UnitSpec(
        moments=(float(mean), float(mean * mean + var)),
        demand_bounds=(lo, hi),
        staffing_bounds=(wl, wu),
        attendance=AttendanceFunction.linear(rate, wl, wu),
    )


def resource_cap_for(means: Sequence[float], unit_rates: Sequence[float],
                     pool_rates: Sequence[float], s_high: float) -> int:
    avg = (sum(unit_rates) + sum(pool_rates)) / (len(unit_rates) + len(pool_rates))
    return math.ceil(s_high * sum(avg * m for m in means))


DEFAULT_COSTS = CostParams(c_w=100.0, c_y=130.0, c_x=400.0, c_e=50.0)


def pool_members_for(structure: PoolStructureKind, J: int, I: int) -> list[tuple[int, ...]]:
    if structure == PoolStructureKind.NO_POOL:
        if I != 0:
            raise ValueError("NoPool structure requires I = 0")
        return []
    if structure == PoolStructureKind.ONE_POOL:
        if I != 1:
            raise ValueError("OnePool structure requires I = 1")
        return [tuple(range(J))]
    if structure == PoolStructureKind.CHAINED:
        if I != J or J < 3:
            raise ValueError("Chained structure requires I = J >= 3")
        return chain_members(J)
    if structure == PoolStructureKind.DISJOINT:
        if not 1 <= I <= J:
            raise ValueError("Disjoint structure requires 1 <= I <= J")
        # contiguous blocks of near-equal size covering every unit
        return [tuple(int(k) for k in b) for b in np.array_split(np.arange(J), I)]
    raise ValueError(f"cannot generate structure {structure}")


def generate_instance(seed: int, J: int, I: int, structure: PoolStructureKind | str,
                      safety: tuple[float, float] = (0.1, 1.5), *,
                      costs: CostParams = DEFAULT_COSTS, w_upper: int = 200,
                      y_upper: int = 200) -> Instance:
    """Random test instance: U[5,20] means, U[0,20] standard deviations,
    linear attendance with unit rates U[0.60,0.98] and pool rates U[0.98,1]."""
    structure = PoolStructureKind(structure)
    if J < 1:
        raise ValueError("J must be positive")
    members = pool_members_for(structure, J, I)
    s_low, s_high = safety
    rng = np.random.default_rng(seed)
    means = rng.uniform(5, 20, J)
    sds = rng.uniform(0, 20, J)
    a_u = rng.uniform(0.60, 0.98, J)
    a_p = rng.uniform(0.98, 1.00, I)
    units = []
    for j in range(J):
        wl = min(math.floor(s_low * a_u[j] * means[j]), w_upper)
        units.append(make_unit(float(means[j]), float(sds[j]), float(a_u[j]), (wl, w_upper)))
    pools = tuple(
        PoolSpec(m, (0, y_upper), AttendanceFunction.linear(float(a_p[i]), 0, y_upper))
        for i, m in enumerate(members)
    )
    cap = resource_cap_for(means, a_u, a_p, s_high)
    return Instance(tuple(units), pools, costs, cap,
                    f"generated seed={seed} J={J} I={I} {structure.value}")


CASE_COSTS = CostParams(c_w=100.0, c_y=110.0, c_x=200.0, c_e=0.0)
LOW_SD, HIGH_SD = (7.24, 7.92), (17.14, 18.42)
LOW_ABSENCE, HIGH_ABSENCE = (0.02, 0.04), (0.20, 0.40)
# (subset A, subset B) as (high sd?, high absence?)
CASES = {1: ((False, False), (True, False)),
         2: ((False, False), (False, True)),
         3: ((False, False), (True, True))}


def case_instance(seed: int, case: int, J: int = 4, safety: tuple[float, float] = (0.1, 1.5),
                  *, costs: CostParams = CASE_COSTS, w_upper: int = 200,
                  y_upper: int = 200, pool_rate: float = 0.99) -> tuple[Instance, tuple[int, ...]]:
    """Pool-pattern test instance: the first half of the units form the
    low-variability subset A, the rest the subset B. Returns the one-pool
    instance and the indices of B."""
    if case not in CASES:
        raise ValueError(f"case must be one of {sorted(CASES)}")
    if J < 2:
        raise ValueError("need at least two units")
    s_low, s_high = safety
    rng = np.random.default_rng(seed)
    n_a = J // 2
    units, means, rates = [], [], []
    for j in range(J):
        high_sd, high_abs = CASES[case][0 if j < n_a else 1]
        mean = float(rng.uniform(25, 27))
        sd = float(rng.uniform(*(HIGH_SD if high_sd else LOW_SD)))
        rate = 1.0 - float(rng.uniform(*(HIGH_ABSENCE if high_abs else LOW_ABSENCE)))
        wl = min(math.floor(s_low * rate * mean), w_upper)
        units.append(make_unit(mean, sd, rate, (wl, w_upper)))
        means.append(mean)
        rates.append(rate)
    pool = PoolSpec(tuple(range(J)), (0, y_upper), AttendanceFunction.linear(pool_rate, 0, y_upper))
    cap = resource_cap_for(means, rates, [pool_rate], s_high)
    inst = Instance(tuple(units), (pool,), costs, cap, f"case {case} seed={seed} J={J}")
    return inst, tuple(range(n_a, J))


# ---------------------------------------------------------------- file I/O

def _att_to_dict(att: AttendanceFunction) -> dict:
    return {"base_level": att.base_level, "values": list(att.values)}


def instance_to_dict(instance: Instance) -> dict:
    c = instance.costs
    return {
        "version": FORMAT_VERSION,
        "label": instance.label,
        "costs": {"c_w": c.c_w, "c_y": c.c_y, "c_x": c.c_x, "c_e": c.c_e},
        "resource_cap": instance.resource_cap,
        "units": [
            {
                "moments": list(u.moments),
                "demand_bounds": list(u.demand_bounds),
                "staffing_bounds": list(u.staffing_bounds),
                "attendance": _att_to_dict(u.attendance),
            }
            for u in instance.units
        ],
        "pools": [
            {
                "members": list(p.members),
                "staffing_bounds": list(p.staffing_bounds),
                "attendance": _att_to_dict(p.attendance),
            }
            for p in instance.pools
        ],
    }


class _Reader:
    """Small helper that reports the field path on schema errors."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, path: str, msg: str):
        raise InstanceFormatError(f"{self.source}: field '{path}': {msg}")

    def get(self, obj, key, path):
        if not isinstance(obj, dict):
            self.fail(path, "expected an object")
        if key not in obj:
            self.fail(f"{path}.{key}" if path else key, "missing")
        return obj[key]

    def number(self, val, path) -> float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(path, f"expected a number, got {type(val).__name__}")
        return float(val)

    def integer(self, val, path) -> int:
        if isinstance(val, bool) or not isinstance(val, int):
            if isinstance(val, float) and val.is_integer():
                return int(val)
            self.fail(path, f"expected an integer, got {val!r}")
        return int(val)

    def pair(self, val, path) -> tuple[int, int]:
        if not isinstance(val, list) or len(val) != 2:
            self.fail(path, "expected a two-element list")
        return self.integer(val[0], f"{path}[0]"), self.integer(val[1], f"{path}[1]")

    def numbers(self, val, path) -> tuple[float, ...]:
        if not isinstance(val, list):
            self.fail(path, "expected a list of numbers")
        return tuple(self.number(v, f"{path}[{k}]") for k, v in enumerate(val))

    def attendance(self, val, path) -> AttendanceFunction:
        return AttendanceFunction(
            self.integer(self.get(val, "base_level", path), f"{path}.base_level"),
            self.numbers(self.get(val, "values", path), f"{path}.values"),
        )


def _load_json(path: str | Path) -> dict:
    text = Path(path).read_text()
    if not text.strip():
        raise InstanceFormatError(f"{path}: empty file")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError(f"{path}: top level must be an object")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise InstanceFormatError(f"{path}: unsupported schema version {version!r} (expected {FORMAT_VERSION})")
    return doc


def instance_from_dict(doc: dict, source: str = "<dict>") -> Instance:
    r = _Reader(source)
    costs_doc = r.get(doc, "costs", "")
    costs = CostParams(*(r.number(r.get(costs_doc, k, "costs"), f"costs.{k}")
                         for k in ("c_w", "c_y", "c_x", "c_e")))
    units = []
    for j, u in enumerate(r.get(doc, "units", "")):
        p = f"units[{j}]"
        units.append(UnitSpec(
            moments=r.numbers(r.get(u, "moments", p), f"{p}.moments"),
            demand_bounds=r.pair(r.get(u, "demand_bounds", p), f"{p}.demand_bounds"),
            staffing_bounds=r.pair(r.get(u, "staffing_bounds", p), f"{p}.staffing_bounds"),
            attendance=r.attendance(r.get(u, "attendance", p), f"{p}.attendance"),
        ))
    pools = []
    for i, q in enumerate(doc.get("pools", [])):
        p = f"pools[{i}]"
        members = r.get(q, "members", p)
        if not isinstance(members, list):
            r.fail(f"{p}.members", "expected a list")
        pools.append(PoolSpec(
            members=tuple(r.integer(m, f"{p}.members[{k}]") for k, m in enumerate(members)),
            staffing_bounds=r.pair(r.get(q, "staffing_bounds", p), f"{p}.staffing_bounds"),
            attendance=r.attendance(r.get(q, "attendance", p), f"{p}.attendance"),
        ))
    cap = doc.get("resource_cap")
    cap = None if cap is None else r.integer(cap, "resource_cap")
    return Instance(tuple(units), tuple(pools), costs, cap, str(doc.get("label", "")))


def read_instance(path: str | Path) -> Instance:
    return instance_from_dict(_load_json(path), str(path))


def write_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(instance), indent=1) + "\n")


def solution_to_dict(sol: StaffingSolution) -> dict:
    return {
        "version": FORMAT_VERSION,
        "kind": "solution",
        "w": list(sol.w),
        "y": list(sol.y),
        "dr_cost": sol.dr_cost,
        "first_stage_cost": sol.first_stage_cost,
        "worst_case_expectation": sol.worst_case_expectation,
        "method": sol.method,
        "cuts_used": sol.cuts_used,
        "wall_time": sol.wall_time,
        "status": sol.status,
        "extra": sol.extra,
    }


def solution_from_dict(doc: dict, source: str = "<dict>") -> StaffingSolution:
    r = _Reader(source)
    return StaffingSolution(
        w=tuple(r.integer(v, f"w[{k}]") for k, v in enumerate(r.get(doc, "w", ""))),
        y=tuple(r.integer(v, f"y[{k}]") for k, v in enumerate(r.get(doc, "y", ""))),
        dr_cost=r.number(r.get(doc, "dr_cost", ""), "dr_cost"),
        first_stage_cost=r.number(r.get(doc, "first_stage_cost", ""), "first_stage_cost"),
        worst_case_expectation=r.number(r.get(doc, "worst_case_expectation", ""),
                                        "worst_case_expectation"),
        method=str(r.get(doc, "method", "")),
        cuts_used=r.integer(doc.get("cuts_used", 0), "cuts_used"),
        wall_time=r.number(doc.get("wall_time", 0.0), "wall_time"),
        status=str(doc.get("status", "optimal")),
        extra=dict(doc.get("extra", {})),
    )


def read_solution(path: str | Path) -> StaffingSolution:
    return solution_from_dict(_load_json(path), str(path))


def write_solution(sol: StaffingSolution, path: str | Path) -> None:
    Path(path).write_text(json.dumps(solution_to_dict(sol), indent=1) + "\n")


# ---------------------------------------------------------------- fixtures

REPRESENTATIVE_TABLE = {
    "mean": (11.42, 6.34, 17.73, 19.15, 19.69, 15.67, 14.84),
    "sd": (5.05, 4.03, 6.44, 17.06, 16.39, 16.52, 15.92),
    "unit_rate": (0.97, 0.98, 0.98, 0.61, 0.75, 0.67, 0.67),
    "pool_rate": 0.99,
}


def representative_instance(safety: tuple[float, float] = (0.1, 1.5), w_upper: int = 200,
                            y_upper: int = 200) -> Instance:
    """Seven units sharing one pool, built from the published input table
    with the generator's bounds and resource cap."""
    tab = REPRESENTATIVE_TABLE
    s_low, s_high = safety
    units = tuple(
        make_unit(m, sd, a, (min(math.floor(s_low * a * m), w_upper), w_upper))
        for m, sd, a in zip(tab["mean"], tab["sd"], tab["unit_rate"])
    )
    pool = PoolSpec(tuple(range(len(units))), (0, y_upper),
                    AttendanceFunction.linear(tab["pool_rate"], 0, y_upper))
    cap = resource_cap_for(tab["mean"], tab["unit_rate"], [tab["pool_rate"]], s_high)
    return Instance(units, (pool,), DEFAULT_COSTS, cap, "representative 7-unit one-pool instance")


def load_fixture(name: str = "representative_7unit") -> Instance:
    from importlib.resources import files

    return read_instance(files("drstaff") / "data" / f"{name}.json")

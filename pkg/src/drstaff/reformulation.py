"""MILP building blocks shared by the master problem, the monolithic
models and the pool-design model.

Staffing levels are written as ``w_j = w_L + sum_k a_k u_jk`` with
binaries u. The unary encoding (a_k = 1, ordered binaries) works
for any tabulated attendance; when attendance is affine the levels can be
encoded in base two (a_k = 2^k) with the same products, which keeps the
model small for wide staffing ranges. When attendance is a rate,
f(w) = A w, the dual gamma only enters through gamma * w, and for integer
w that product ranges exactly over [-c_x w, 0]; the ``rate`` encoding
keeps one general integer per unit and two linear rows. The bilinear products
``u_jk * gamma_j`` are replaced by
``phi_jk`` through McCormick rows with M = c_x (``gamma`` lives in
[-c_x, 0] without loss of optimality, so one side of the envelope needs
no big-M at all). The cut coefficients of the inner maximisation are
lifted to epigraph variables shared by every cut:

* ``eta_x_j >= c_x d - sum_q rho_jq d^q`` for every integer demand d,
* ``eta_e_j >= c_e d - sum_q rho_jq d^q`` likewise,
* ``zeta_j >= (-c_e - gamma_j) w_L - sum_k a_k (phi_jk + c_e u_jk)``, ``zeta_j >= 0``,
* ``pool_hinge_i`` the pool analogue of ``zeta``,
* ``chi_j >= eta_x_j`` and ``chi_j >= zeta_j + eta_e_j``.

so that c_t = eta_x, c_r = zeta + eta_e and c_p = pool_hinge at the
minimum, and each cut is a single row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adversary import AdversaryPoint, Iterate
from .backend import INF, LinearModel
from .model import Instance

MAX_DEMAND_ROWS = 10_000


class DuplicateCut(ValueError):
    """The cut for this adversary point is already in the model."""


@dataclass
class ExpansionVars:
    """Variable indices of the staffing expansion and the moment duals."""

    u: list[np.ndarray]
    v: list[np.ndarray]
    phi: list[np.ndarray]
    nu: list[np.ndarray]
    gamma: np.ndarray
    lam: np.ndarray
    rho: list[np.ndarray]
    u_weight: list[np.ndarray]
    v_weight: list[np.ndarray]
    u_encoding: list[str] = field(default_factory=list)
    v_encoding: list[str] = field(default_factory=list)

    def staffing(self, instance: Instance, x: np.ndarray) -> tuple[tuple[int, ...], tuple[int, ...]]:
        w = tuple(int(unit.staffing_bounds[0] + round(float(x[self.u[j]] @ self.u_weight[j])))
                  for j, unit in enumerate(instance.units))
        y = tuple(int(pool.staffing_bounds[0] + round(float(x[self.v[i]] @ self.v_weight[i])))
                  for i, pool in enumerate(instance.pools))
        return w, y

    def iterate(self, instance: Instance, x: np.ndarray) -> Iterate:
        """Master solution values in the form the cut coefficients consume.

        Binaries and products are scaled by their weights, so the sums the
        coefficients use are encoding independent."""
        Q = max((len(u.moments) for u in instance.units), default=1)
        rho = np.zeros((instance.J, Q))
        for j, idx in enumerate(self.rho):
            rho[j, :idx.size] = x[idx]
        gamma = x[self.gamma].copy()
        lam = x[self.lam].copy() if self.lam.size else np.zeros(0)
        u, phi = _scaled(x, self.u, self.phi, self.u_weight, self.u_encoding, gamma,
                         [s.staffing_bounds[0] for s in instance.units], instance.costs.c_x)
        v, nu = _scaled(x, self.v, self.nu, self.v_weight, self.v_encoding, lam,
                        [s.staffing_bounds[0] for s in instance.pools], instance.costs.c_x)
        return Iterate(u=u, v=v, phi=phi, nu=nu, gamma=gamma, lam=lam, rho=rho)


def _scaled(x, us, phis, weights, encodings, dual, lower, c_x):
    """Weighted binaries and products; rate blocks get gamma = product / level."""
    out_u, out_phi = [], []
    for k, (a, b, wt) in enumerate(zip(us, phis, weights)):
        uk = np.rint(x[a]) * wt
        pk = x[b] * wt
        if k < len(encodings) and encodings[k] == "rate":
            level = lower[k] + float(uk.sum())
            product = lower[k] * dual[k] + float(pk.sum())
            dual[k] = min(max(product / level, -c_x), 0.0) if level > 0 else 0.0
            pk = dual[k] * uk
        out_u.append(uk)
        out_phi.append(pk)
    return out_u, out_phi


@dataclass
class DualVars:
    """Epigraph variables standing in for the cut coefficients."""

    zeta: np.ndarray
    eta_x: np.ndarray
    eta_e: np.ndarray
    pool_hinge: np.ndarray
    chi: np.ndarray | None = None


@dataclass
class CostExpression:
    """Linear cost ``const + coef . x[idx]``."""

    idx: list[int] = field(default_factory=list)
    coef: list[float] = field(default_factory=list)
    const: float = 0.0

    def add(self, idx, coef) -> None:
        idx = np.atleast_1d(idx)
        self.idx.extend(int(i) for i in idx)
        self.coef.extend(np.broadcast_to(np.asarray(coef, dtype=float), idx.shape).tolist())

    def value(self, x: np.ndarray) -> float:
        return self.const + float(np.dot(self.coef, x[self.idx])) if self.idx else self.const


def affine_increment(att) -> float | None:
    """Common increment when the tabulated attendance is affine, else None."""
    inc = att.increments
    if inc.size == 0:
        return 0.0
    return float(inc[0]) if np.allclose(inc, inc[0], rtol=1e-12, atol=1e-12) else None


def _is_rate(att) -> bool:
    return att.rate() is not None and (att.base_level > 0 or att.values[0] == 0.0)


def _encoding_for(att, encoding: str) -> str:
    if encoding == "auto":
        if _is_rate(att):
            return "rate"
        return "binary" if affine_increment(att) is not None else "unary"
    if encoding == "binary" and affine_increment(att) is None:
        raise ValueError("binary staffing encoding needs affine attendance")
    if encoding == "rate" and not _is_rate(att):
        raise ValueError("rate staffing encoding needs attendance proportional to staffing")
    if encoding not in ("unary", "binary", "rate"):
        raise ValueError(f"unknown staffing encoding {encoding!r}")
    return encoding


def _unit_block(model: LinearModel, j: int, spec, c_x: float, gamma: int, tag: str,
                encoding: str):
    """Staffing binaries, their weights, and the products with the dual."""
    lo, hi = spec.staffing_bounds
    n = hi - lo
    if encoding == "rate":
        # one integer for w - w_L; lo*gamma + phi is the product gamma*w,
        # whose exact range for integer w is [-c_x w, 0]
        u = model.add_vars(1, 0.0, float(n), integer=True, name=f"{tag}w[{j}]")
        phi = model.add_vars(1, -c_x * hi, c_x * lo, name=f"{tag}prod[{j}]")
        model.add_row([gamma, phi[0]], [float(lo), 1.0], -INF, 0.0, f"{tag}prod_up[{j}]")
        model.add_row([gamma, phi[0], u[0]], [float(lo), 1.0, c_x], -c_x * lo, INF,
                      f"{tag}prod_lo[{j}]")
        return u, phi, np.ones(1)
    if encoding == "unary":
        weights = np.ones(n)
    else:
        weights = 2.0 ** np.arange(int(n).bit_length())
    u = model.add_vars(weights.size, 0.0, 1.0, integer=True, name=f"{tag}u[{j}]")
    phi = model.add_vars(weights.size, -c_x, 0.0, name=f"{tag}phi[{j}]")
    if encoding == "unary":
        for k in range(n - 1):
            model.add_row([u[k], u[k + 1]], [1.0, -1.0], 0.0, INF, f"{tag}order_u[{j},{k}]")
    elif weights.size and weights.sum() > n:
        model.add_row(u, weights, -INF, float(n), f"{tag}range_u[{j}]")
    for k in range(weights.size):
        # gamma <= phi <= 0 (bounds carry the upper side)
        model.add_row([phi[k], gamma], [1.0, -1.0], 0.0, INF, f"{tag}mc_lo[{j},{k}]")
        # -M u <= phi
        model.add_row([phi[k], u[k]], [1.0, c_x], 0.0, INF, f"{tag}mc_u[{j},{k}]")
        # phi <= gamma + M (1 - u)
        model.add_row([phi[k], gamma, u[k]], [1.0, -1.0, c_x], -INF, c_x, f"{tag}mc_up[{j},{k}]")
    return u, phi, weights


def _increments(att, encoding: str, weights: np.ndarray) -> np.ndarray:
    if encoding == "unary":
        return att.increments
    if encoding == "rate":
        return np.array([att.rate()])
    return affine_increment(att) * weights


def add_expansion(model: LinearModel, instance: Instance, *, objective: bool = True,
                  pools: bool = True, tag: str = "", encoding: str = "unary",
                  ) -> tuple[ExpansionVars, CostExpression, list[CostExpression]]:
    """Binary expansion, McCormick rows and moment duals.

    ``encoding`` is ``unary``, ``binary`` (affine attendance only),
    ``rate`` (attendance proportional to staffing) or ``auto`` (the most
    compact encoding each attendance function admits).

    Returns the variable handles, the unit part of the first-stage plus
    dual objective, and one cost expression per pool. With ``objective``
    set both are added to the model objective.
    """
    c = instance.costs
    unit_cost = CostExpression()
    us, phis, rhos, uw, ue = [], [], [], [], []
    gamma = model.add_vars(instance.J, -c.c_x, 0.0, name=f"{tag}gamma")
    for j, unit in enumerate(instance.units):
        enc = _encoding_for(unit.attendance, encoding)
        u, phi, wt = _unit_block(model, j, unit, c.c_x, int(gamma[j]), tag, enc)
        uw.append(wt)
        ue.append(enc)
        rho = model.add_vars(len(unit.moments), -INF, INF, name=f"{tag}rho[{j}]")
        us.append(u)
        phis.append(phi)
        rhos.append(rho)
        wl = unit.staffing_bounds[0]
        unit_cost.const += c.c_w * wl
        unit_cost.add(rho, unit.moments)
        unit_cost.add(gamma[j], unit.attendance(wl))
        unit_cost.add(u, c.c_w * wt)
        unit_cost.add(phi, _increments(unit.attendance, enc, wt))

    vs, nus, pool_costs, vw, ve = [], [], [], [], []
    lam = np.zeros(0, dtype=np.int64)
    if pools and instance.I:
        lam = model.add_vars(instance.I, -c.c_x, 0.0, name=f"{tag}lambda")
        for i, pool in enumerate(instance.pools):
            enc = _encoding_for(pool.attendance, encoding)
            v, nu, wt = _unit_block(model, i, pool, c.c_x, int(lam[i]), tag + "pool_", enc)
            vw.append(wt)
            ve.append(enc)
            vs.append(v)
            nus.append(nu)
            yl = pool.staffing_bounds[0]
            pc = CostExpression(const=c.c_y * yl)
            pc.add(lam[i], pool.attendance(yl))
            pc.add(v, c.c_y * wt)
            pc.add(nu, _increments(pool.attendance, enc, wt))
            pool_costs.append(pc)

    if instance.resource_cap is not None:
        idx = np.concatenate(us + vs).astype(np.int64) if us or vs else np.zeros(0, np.int64)
        wts = np.concatenate(uw + vw) if us or vs else np.zeros(0)
        base = sum(u.staffing_bounds[0] for u in instance.units)
        if pools:
            base += sum(p.staffing_bounds[0] for p in instance.pools)
        model.add_row(idx, wts, -INF, instance.resource_cap - base, f"{tag}resource_cap")

    if objective:
        for expr in [unit_cost] + pool_costs:
            for i, cf in zip(expr.idx, expr.coef):
                model.add_objective(i, cf)
            model.obj_offset += expr.const
    ev = ExpansionVars(us, vs, phis, nus, gamma, lam, rhos, uw, vw, ue, ve)
    return ev, unit_cost, pool_costs


def demand_rows(model: LinearModel, eta: int, rho: np.ndarray, coef: float,
                lo: int, hi: int, name: str) -> None:
    """eta + sum_q d^q rho_q >= coef * d for every integer d in [lo, hi]."""
    if hi - lo + 1 > MAX_DEMAND_ROWS:
        raise ValueError(f"{name}: demand support of {hi - lo + 1} points exceeds "
                         f"the limit of {MAX_DEMAND_ROWS} rows per unit")
    Q = rho.size
    for d in range(lo, hi + 1):
        powers = [float(d) ** (q + 1) for q in range(Q)]
        model.add_row([eta, *rho], [1.0, *powers], coef * d, INF, f"{name}[d={d}]")


def add_epigraphs(model: LinearModel, instance: Instance, ev: ExpansionVars, *,
                  chi: bool = False, tag: str = "") -> DualVars:
    c = instance.costs
    J = instance.J
    zeta = model.add_vars(J, 0.0, INF, name=f"{tag}zeta")
    eta_x = model.add_vars(J, -INF, INF, name=f"{tag}eta_x")
    eta_e = model.add_vars(J, -INF, INF, name=f"{tag}eta_e")
    for j, unit in enumerate(instance.units):
        lo, hi = unit.demand_bounds
        demand_rows(model, int(eta_x[j]), ev.rho[j], c.c_x, lo, hi, f"{tag}eta_x[{j}]")
        demand_rows(model, int(eta_e[j]), ev.rho[j], c.c_e, lo, hi, f"{tag}eta_e[{j}]")
        wl = unit.staffing_bounds[0]
        wt = ev.u_weight[j]
        model.add_row([zeta[j], ev.gamma[j], *ev.phi[j], *ev.u[j]],
                      [1.0, float(wl), *wt, *(c.c_e * wt)],
                      -c.c_e * wl, INF, f"{tag}zeta_hinge[{j}]")
    hinge = np.zeros(0, dtype=np.int64)
    if ev.lam.size:
        hinge = model.add_vars(instance.I, 0.0, INF, name=f"{tag}pool_hinge")
        for i, pool in enumerate(instance.pools):
            yl = pool.staffing_bounds[0]
            wt = ev.v_weight[i]
            model.add_row([hinge[i], ev.lam[i], *ev.nu[i], *ev.v[i]],
                          [1.0, float(yl), *wt, *(c.c_e * wt)],
                          -c.c_e * yl, INF, f"{tag}pool_hinge[{i}]")
    chis = None
    if chi:
        chis = model.add_vars(J, -INF, INF, name=f"{tag}chi")
        for j in range(J):
            model.add_row([chis[j], eta_x[j]], [1.0, -1.0], 0.0, INF, f"{tag}chi_x[{j}]")
            model.add_row([chis[j], zeta[j], eta_e[j]], [1.0, -1.0, -1.0], 0.0, INF,
                          f"{tag}chi_e[{j}]")
    return DualVars(zeta, eta_x, eta_e, hinge, chis)


def cut_terms(dv: DualVars, point: AdversaryPoint) -> tuple[list[int], list[float]]:
    """Right-hand side of the cut as (indices, coefficients)."""
    idx: list[int] = []
    coef: list[float] = []
    for j, tj in enumerate(point.t):
        if tj:
            idx.append(int(dv.eta_x[j]))
            coef.append(1.0)
        else:
            idx += [int(dv.zeta[j]), int(dv.eta_e[j])]
            coef += [1.0, 1.0]
    for i, pi in enumerate(point.p):
        if pi:
            idx.append(int(dv.pool_hinge[i]))
            coef.append(1.0)
    return idx, coef


class CutSet:
    """Cuts ``theta >= sum_j [t_j eta_x_j + r_j (zeta_j + eta_e_j)] + sum_i p_i hinge_i``."""

    def __init__(self, model: LinearModel, theta: int, dv: DualVars):
        self.model = model
        self.theta = theta
        self.dv = dv
        self.keys: set = set()
        self.points: list[AdversaryPoint] = []

    def __len__(self) -> int:
        return len(self.points)

    def __contains__(self, point: AdversaryPoint) -> bool:
        return point.key in self.keys

    def add(self, point: AdversaryPoint) -> int:
        if point.key in self.keys:
            raise DuplicateCut(f"cut for t={point.t} already present")
        idx, coef = cut_terms(self.dv, point)
        row = self.model.add_row([self.theta, *idx], [1.0] + [-c for c in coef], 0.0, INF,
                                 f"cut[{len(self.points)}]")
        self.keys.add(point.key)
        self.points.append(point)
        return row


def encode_cut(cuts: CutSet, point: AdversaryPoint) -> int:
    return cuts.add(point)

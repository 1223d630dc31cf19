"""Steady-state trim optimization and the trim-map.

A trim point at operating point (airspeed v_a, flight-path angle gamma) is
a longitudinally symmetric actuation u = (delta_w, delta_plr, delta_alr,
delta_e, delta_pt) and pitch theta that zero the translational and pitch
accelerations. Over-actuation is resolved by a secondary cost (net power,
control-surface saturation, pitch-target deviation, neighbor deviation);
the whole problem is solved as bound-constrained nonlinear least squares.

The map over a (v_a, gamma) grid is built with neighbor-seeded initial
guesses: each cell is re-solved with every newly improved neighboring
solution as initial guess until no cell improves.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .aero import body_wrench
from .leastsq import least_squares_lm
from .vehicle import ActuatorSet, VehicleParams

log = logging.getLogger(__name__)

U_FIELDS = ("delta_w", "delta_plr", "delta_alr", "delta_e", "delta_pt")
U_LO = np.array([0.0, 0.0, -1.0, -1.0, 0.0])
U_HI = np.array([1.0, 1.0, 1.0, 1.0, 1.0])

CSV_HEADER = "va,gamma,feasible,theta_t,delta_w,delta_plr,delta_al,delta_e,delta_pt,cost,res_v,res_th"


class TrimError(RuntimeError):
    pass


@dataclass
class TrimWeights:
    """Steadiness weighting, feasibility thresholds, and cost weights."""

    q_v: float = 10.0            # on v_dot (x and z, inertial)
    q_theta: float = 10.0        # on theta_ddot
    w_power: float = 0.01
    w_sat: float = 1.0
    w_pitch: float = 1.0
    w_neighbor: float = 0.1
    eps_v: float = 0.05          # m/s^2 feasibility threshold
    eps_theta: float = 0.05      # rad/s^2
    sat_threshold: float = 0.9   # |delta_cs| where the barrier turns on
    sat_scale: float = 0.05
    theta_star_ramp: float = 12.0  # m/s; theta* blends 0 -> gamma up to here


@dataclass
class TrimPoint:
    v_a: float
    gamma: float
    u: np.ndarray                # (5,) in U_FIELDS order
    theta: float
    res_v: float                 # ||v_dot|| at the solution
    res_theta: float             # |theta_ddot|
    cost: float                  # secondary cost q (power + saturation + pitch)
    feasible: bool

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.u, [self.theta]])


def trim_actuation(vp: VehicleParams, u: np.ndarray) -> ActuatorSet:
    """Longitudinally symmetric actuation: equal main throttles and the
    aileron pair deflected in flap mode (delta_al = -delta_ar)."""
    act = ActuatorSet(
        delta_w=u[0], delta_pl=u[1], delta_pr=u[1],
        delta_al=u[2], delta_ar=-u[2], delta_e=u[3], delta_pt=u[4])
    a = vp.actuators
    act.zeta_w = u[0] * a["w"].travel
    act.eta_pl = act.eta_pr = u[1] * a["pl"].travel
    act.zeta_al = u[2] * a["al"].travel
    act.zeta_ar = -u[2] * a["ar"].travel
    act.zeta_e = u[3] * a["e"].travel
    act.eta_pt = u[4] * a["pt"].travel
    return act


_ZERO3 = np.zeros(3)


def trim_accelerations(u: np.ndarray, theta: float, v_a: float, gamma: float,
                       vp: VehicleParams) -> tuple[np.ndarray, float]:
    """(v_dot inertial, theta_ddot) of the steady candidate at omega = 0."""
    act = trim_actuation(vp, u)
    ct, st = math.cos(theta), math.sin(theta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    # body airspeed = R_y(theta)^T (v_a cos(g), 0, -v_a sin(g))
    v_a_body = np.array([v_a * (ct * cg + st * sg), 0.0,
                         v_a * (st * cg - ct * sg)])
    fm = body_wrench(v_a_body, _ZERO3, act, vp, want_breakdown=False)
    f = fm.force
    v_dot = vp.gravity + np.array([ct * f[0] + st * f[2], f[1],
                                   -st * f[0] + ct * f[2]]) / vp.mass
    theta_ddot = float(vp.inertia_inv[1] @ fm.moment)
    return v_dot, theta_ddot


def theta_star(v_a: float, gamma: float, w: TrimWeights) -> float:
    """Pitch target: zero near hover, aligned with gamma at speed."""
    return gamma * min(max(v_a / w.theta_star_ramp, 0.0), 1.0)


def _softplus(x: float, scale: float) -> float:
    t = x / scale
    if t > 30.0:
        return x
    return scale * math.log1p(math.exp(t))


def shaft_power(vp: VehicleParams, u: np.ndarray) -> float:
    """Static shaft-power proxy sum(rho eta^3 D^5 C_Q0) over all props.

    |eta| keeps the proxy nonnegative when a finite-difference probe steps
    a throttle command marginally below zero."""
    eta_plr = u[1] * vp.actuators["pl"].travel
    eta_pt = u[4] * vp.actuators["pt"].travel
    total = 0.0
    for prop in vp.propellers:
        eta = eta_pt if prop.mount == "tail" else eta_plr
        total += vp.rho * abs(eta) ** 3 * prop.diameter ** 5 * prop.cq0
    return total


def _cost_terms(u: np.ndarray, theta: float, th_star: float,
                vp: VehicleParams, w: TrimWeights) -> tuple[float, list[float], float]:
    power = w.w_power * shaft_power(vp, u)
    sat = [w.w_sat * _softplus(abs(u[k]) - w.sat_threshold, w.sat_scale)
           for k in (2, 3)]
    pitch = w.w_pitch * (theta - th_star) ** 2
    return power, sat, pitch


def trim_cost(u: np.ndarray, theta: float, neighbors: list[np.ndarray],
              th_star: float, vp: VehicleParams,
              w: TrimWeights | None = None) -> float:
    """Secondary cost q >= 0: net power, control-surface saturation
    barriers, pitch-target deviation, and deviation from the mean of the
    neighboring solutions."""
    w = w or TrimWeights()
    power, sat, pitch = _cost_terms(u, theta, th_star, vp, w)
    q = power + sum(sat) + pitch
    if neighbors:
        z = np.concatenate([u, [theta]])
        q += w.w_neighbor * float(np.sum((z - np.mean(neighbors, axis=0)) ** 2))
    return q


def trim_cost_base(u: np.ndarray, theta: float, th_star: float,
                   vp: VehicleParams, w: TrimWeights) -> float:
    """Cost without the neighbor coupling; comparable across map sweeps."""
    power, sat, pitch = _cost_terms(u, theta, th_star, vp, w)
    return power + sum(sat) + pitch


def trim_residual(u: np.ndarray, theta: float, v_a: float, gamma: float,
                  vp: VehicleParams, w: TrimWeights | None = None,
                  neighbors: list[np.ndarray] | None = None,
                  th_star: float | None = None) -> np.ndarray:
    """Weighted residual vector [sqrt(Q_v) v_dot_xz, sqrt(Q_theta)
    theta_ddot, sqrt(cost terms)] whose squared norm is the trim objective."""
    w = w or TrimWeights()
    if th_star is None:
        th_star = theta_star(v_a, gamma, w)
    v_dot, th_dd = trim_accelerations(u, theta, v_a, gamma, vp)
    sq_v = math.sqrt(w.q_v)
    parts = [sq_v * v_dot[0], sq_v * v_dot[2], math.sqrt(w.q_theta) * th_dd]
    power, sat, pitch = _cost_terms(u, theta, th_star, vp, w)
    parts.append(math.sqrt(power))
    parts.extend(math.sqrt(s) for s in sat)
    parts.append(math.sqrt(w.w_pitch) * (theta - th_star))
    if neighbors:
        z = np.concatenate([u, [theta]])
        dev = z - np.mean(neighbors, axis=0)
        parts.extend(math.sqrt(w.w_neighbor) * dev)
    return np.array(parts)


def solve_trim_point(v_a: float, gamma: float, ig: np.ndarray,
                     vp: VehicleParams, w: TrimWeights | None = None,
                     neighbors: list[np.ndarray] | None = None,
                     max_iter: int = 80) -> TrimPoint:
    """Solve one operating point from an initial guess z = (u, theta)."""
    w = w or TrimWeights()
    th_star = theta_star(v_a, gamma, w)
    lb = np.concatenate([U_LO, [-math.pi / 2]])
    ub = np.concatenate([U_HI, [math.pi / 2]])

    def residual(z):
        return trim_residual(z[:5], z[5], v_a, gamma, vp, w,
                             neighbors=neighbors, th_star=th_star)

    res = least_squares_lm(residual, np.asarray(ig, dtype=float), lb, ub,
                           max_iter=max_iter)
    u, theta = res.x[:5], float(res.x[5])
    v_dot, th_dd = trim_accelerations(u, theta, v_a, gamma, vp)
    res_v = float(np.linalg.norm(v_dot))
    res_th = abs(th_dd)
    feasible = res_v < w.eps_v and res_th < w.eps_theta
    return TrimPoint(v_a=v_a, gamma=gamma, u=u, theta=theta,
                     res_v=res_v, res_theta=res_th,
                     cost=trim_cost_base(u, theta, th_star, vp, w),
                     feasible=feasible)


def hover_initial_guess(vp: VehicleParams) -> np.ndarray:
    """Static-thrust-balance guess for the hover cell."""
    main = vp.prop["pl"]
    eta = math.sqrt(0.95 * vp.weight
                    / (2.0 * vp.rho * main.diameter ** 4 * main.ct0))
    d_plr = min(eta / main.max_speed, 1.0)
    return np.array([1.0, d_plr, 0.0, 0.0, 0.05, 0.0])


# ---------------------------------------------------------------------------
# Trim map
# ---------------------------------------------------------------------------

def default_grid() -> tuple[np.ndarray, np.ndarray]:
    va = np.arange(0.0, 25.0 + 1e-9, 1.0)
    gamma = np.radians(np.arange(-30.0, 30.0 + 1e-9, 5.0))
    return va, gamma


@dataclass
class TrimMap:
    va_axis: np.ndarray
    gamma_axis: np.ndarray
    points: list[list[TrimPoint]]        # indexed [i_va][j_gamma]
    weights: TrimWeights = field(default_factory=TrimWeights)

    def point(self, i: int, j: int) -> TrimPoint:
        return self.points[i][j]

    @property
    def n_feasible(self) -> int:
        return sum(p.feasible for row in self.points for p in row)


@dataclass
class TrimLookup:
    u: np.ndarray
    theta: float
    clamped: bool = False        # query was outside the grid hull


def _neighbor_cells(i: int, j: int, nv: int, ng: int):
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            ni, nj = i + di, j + dj
            if 0 <= ni < nv and 0 <= nj < ng:
                yield ni, nj


def _better(new: TrimPoint, old: TrimPoint | None, tol: float) -> bool:
    if old is None:
        return True
    if new.feasible != old.feasible:
        return new.feasible
    if new.feasible:
        return new.cost < old.cost - tol
    return math.hypot(new.res_v, new.res_theta) \
        < math.hypot(old.res_v, old.res_theta) - tol


def build_trim_map(vp: VehicleParams, w: TrimWeights | None = None,
                   va_axis: np.ndarray | None = None,
                   gamma_axis: np.ndarray | None = None,
                   seed: tuple[float, float, np.ndarray] | None = None,
                   cost_tol: float = 1e-9, max_sweeps: int = 20,
                   max_iter: int = 60,
                   revisit_tol: float = 1e-4) -> TrimMap:
    """Sweep the grid until a fixed point of the neighbor-seeded solves.

    Every cell is solved once per available feasible neighbor solution used
    as initial guess; the lowest-cost feasible solution is kept and
    improvements trigger revisits of the neighbors. A neighbor triggers a
    revisit only when its solution has moved by more than ``revisit_tol``
    in some actuation component since it was last tried; the weak neighbor
    coupling in the cost otherwise keeps circulating improvements far below
    any useful resolution and the sweep would take unbounded time to reach
    the ``cost_tol`` fixed point.
    """
    w = w or TrimWeights()
    if va_axis is None or gamma_axis is None:
        dva, dga = default_grid()
        va_axis = dva if va_axis is None else np.asarray(va_axis, dtype=float)
        gamma_axis = dga if gamma_axis is None else np.asarray(gamma_axis, dtype=float)
    va_axis = np.asarray(va_axis, dtype=float)
    gamma_axis = np.asarray(gamma_axis, dtype=float)
    if np.any(np.diff(va_axis) <= 0.0) or np.any(np.diff(gamma_axis) <= 0.0):
        raise TrimError("grid axes must be strictly increasing")
    nv, ng = va_axis.size, gamma_axis.size

    if seed is None:
        if va_axis[0] != 0.0:
            raise TrimError("default seed needs a hover column (v_a = 0) in the grid")
        j0 = int(np.argmin(np.abs(gamma_axis)))
        seed = (0.0, float(gamma_axis[j0]), hover_initial_guess(vp))
    seed_va, seed_gamma, seed_ig = seed
    si = int(np.argmin(np.abs(va_axis - seed_va)))
    sj = int(np.argmin(np.abs(gamma_axis - seed_gamma)))
    if abs(va_axis[si] - seed_va) > 1e-9 or abs(gamma_axis[sj] - seed_gamma) > 1e-9:
        raise TrimError("seed operating point must be a grid node")

    # the hover column stores the gamma = 0 solution in every gamma cell
    hover_col = 0 if va_axis[0] == 0.0 else None
    hover_j = int(np.argmin(np.abs(gamma_axis))) if hover_col is not None else None

    points: list[list[TrimPoint | None]] = [[None] * ng for _ in range(nv)]
    tried: dict[tuple[int, int, int, int], np.ndarray] = {}

    def pinned(i: int, j: int) -> bool:
        return hover_col is not None and i == hover_col and j != hover_j

    def mirror_hover() -> None:
        if hover_col is None or points[hover_col][hover_j] is None:
            return
        src = points[hover_col][hover_j]
        for j in range(ng):
            if j != hover_j:
                points[hover_col][j] = replace(
                    src, gamma=float(gamma_axis[j]), u=src.u.copy())

    def solve_cell(i: int, j: int, ig: np.ndarray) -> TrimPoint:
        ctx = [points[ni][nj].z for ni, nj in _neighbor_cells(i, j, nv, ng)
               if points[ni][nj] is not None and points[ni][nj].feasible]
        return solve_trim_point(float(va_axis[i]), float(gamma_axis[j]), ig,
                                vp, w, neighbors=ctx or None, max_iter=max_iter)

    first = solve_cell(si, sj, np.asarray(seed_ig, dtype=float))
    if not first.feasible:
        raise TrimError(
            f"seed cell (v_a={seed_va}, gamma={seed_gamma}) did not solve "
            f"feasibly: |v_dot|={first.res_v:.3g}, |th_dd|={first.res_theta:.3g}")
    points[si][sj] = first
    mirror_hover()

    for sweep in range(1, max_sweeps + 1):
        changed = 0
        solves = 0
        for i in range(nv):
            for j in range(ng):
                if pinned(i, j):
                    continue
                for ni, nj in _neighbor_cells(i, j, nv, ng):
                    src = points[ni][nj]
                    if src is None or not src.feasible:
                        continue
                    key = (i, j, ni, nj)
                    last = tried.get(key)
                    if last is not None \
                            and np.abs(src.z - last).max() <= revisit_tol:
                        continue
                    tried[key] = src.z
                    cand = solve_cell(i, j, src.z)
                    solves += 1
                    if _better(cand, points[i][j], cost_tol):
                        points[i][j] = cand
                        changed += 1
                        if i == hover_col and j == hover_j:
                            mirror_hover()
        log.info("trim map sweep %d: %d solves, %d cells improved",
                 sweep, solves, changed)
        if changed == 0 or solves == 0:
            break

    missing = [(i, j) for i in range(nv) for j in range(ng) if points[i][j] is None]
    for i, j in missing:
        # unreachable cells (no feasible neighbor ever appeared): record a
        # direct attempt from the seed guess so every cell is present
        points[i][j] = solve_cell(i, j, np.asarray(seed_ig, dtype=float))

    return TrimMap(va_axis=va_axis, gamma_axis=gamma_axis,
                   points=points, weights=w)


def lookup_trim(tmap: TrimMap, v_a: float, gamma: float) -> TrimLookup:
    """Bilinear interpolation over the four enclosing cells.

    Infeasible corners disqualify interpolation; the nearest feasible cell
    value is used instead. Queries outside the hull are clamped and flagged.
    """
    va_ax, ga_ax = tmap.va_axis, tmap.gamma_axis
    clamped = not (va_ax[0] <= v_a <= va_ax[-1] and ga_ax[0] <= gamma <= ga_ax[-1])
    vq = float(np.clip(v_a, va_ax[0], va_ax[-1]))
    gq = float(np.clip(gamma, ga_ax[0], ga_ax[-1]))

    i = int(np.clip(np.searchsorted(va_ax, vq) - 1, 0, va_ax.size - 2))
    j = int(np.clip(np.searchsorted(ga_ax, gq) - 1, 0, ga_ax.size - 2))
    tx = (vq - va_ax[i]) / (va_ax[i + 1] - va_ax[i])
    ty = (gq - ga_ax[j]) / (ga_ax[j + 1] - ga_ax[j])

    corners = [tmap.points[i][j], tmap.points[i + 1][j],
               tmap.points[i][j + 1], tmap.points[i + 1][j + 1]]
    if all(p.feasible for p in corners):
        wgt = np.array([(1 - tx) * (1 - ty), tx * (1 - ty),
                        (1 - tx) * ty, tx * ty])
        u = sum(wk * p.u for wk, p in zip(wgt, corners))
        theta = sum(wk * p.theta for wk, p in zip(wgt, corners))
        return TrimLookup(u=u, theta=float(theta), clamped=clamped)

    # nearest feasible cell in grid-scaled distance, lexicographic tie-break
    dva = float(np.mean(np.diff(va_ax)))
    dga = float(np.mean(np.diff(ga_ax)))
    best = None
    best_d = math.inf
    for ii in range(va_ax.size):
        for jj in range(ga_ax.size):
            p = tmap.points[ii][jj]
            if not p.feasible:
                continue
            d = ((va_ax[ii] - vq) / dva) ** 2 + ((ga_ax[jj] - gq) / dga) ** 2
            if d < best_d - 1e-15:
                best, best_d = p, d
    if best is None:
        raise TrimError("trim map has no feasible cells")
    return TrimLookup(u=best.u.copy(), theta=best.theta, clamped=clamped)


# ---------------------------------------------------------------------------
# CSV persistence (full double precision, diff-friendly)
# ---------------------------------------------------------------------------

def save_trim_map(tmap: TrimMap, path: str | Path) -> None:
    w = tmap.weights
    lines = [
        "# tiltwing trim map",
        f"# eps_v={w.eps_v!r} eps_theta={w.eps_theta!r}",
        f"# q_v={w.q_v!r} q_theta={w.q_theta!r} w_power={w.w_power!r} "
        f"w_sat={w.w_sat!r} w_pitch={w.w_pitch!r} w_neighbor={w.w_neighbor!r}",
        f"# theta_star_ramp={w.theta_star_ramp!r}",
        CSV_HEADER,
    ]
    for i, va in enumerate(tmap.va_axis):
        for j, ga in enumerate(tmap.gamma_axis):
            p = tmap.points[i][j]
            vals = [va, ga, int(p.feasible), p.theta, *p.u,
                    p.cost, p.res_v, p.res_theta]
            lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating))
                                  else str(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_trim_map(path: str | Path) -> TrimMap:
    meta: dict[str, float] = {}
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    try:
                        meta[k] = float(v)
                    except ValueError:
                        pass
            continue
        if line.startswith("va,"):
            if line != CSV_HEADER:
                raise TrimError(f"unexpected trim map header: {line}")
            continue
        rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        raise TrimError(f"no rows in trim map {path}")

    arr = np.array(rows)
    va_axis = np.unique(arr[:, 0])
    gamma_axis = np.unique(arr[:, 1])
    points: list[list[TrimPoint | None]] = \
        [[None] * gamma_axis.size for _ in range(va_axis.size)]
    for row in arr:
        i = int(np.argmin(np.abs(va_axis - row[0])))
        j = int(np.argmin(np.abs(gamma_axis - row[1])))
        points[i][j] = TrimPoint(
            v_a=row[0], gamma=row[1], u=row[4:9].copy(), theta=row[3],
            res_v=row[10], res_theta=row[11], cost=row[9],
            feasible=bool(row[2]))
    for i in range(va_axis.size):
        for j in range(gamma_axis.size):
            if points[i][j] is None:
                raise TrimError("trim map grid is incomplete")

    weights = TrimWeights()
    for key, attr in (("eps_v", "eps_v"), ("eps_theta", "eps_theta"),
                      ("q_v", "q_v"), ("q_theta", "q_theta"),
                      ("w_power", "w_power"), ("w_sat", "w_sat"),
                      ("w_pitch", "w_pitch"), ("w_neighbor", "w_neighbor"),
                      ("theta_star_ramp", "theta_star_ramp")):
        if key in meta:
            setattr(weights, attr, meta[key])
    return TrimMap(va_axis=va_axis, gamma_axis=gamma_axis, points=points,
                   weights=weights)

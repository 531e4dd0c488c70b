"""Space-time localized checks of the flow's structural estimates.

Probes work on parabolic cylinders P_R(z0) = (t0-R^2, t0+R^2) x B_R(x0) with
the center on the symmetry axis at radius rho0 (rho0 = 0: any dimension;
rho0 > 0: d = 3 only, via exact angular closed forms, no angular
quadrature).  There are two distinct localized quantities:

  * the scaled energy, a backward-Gaussian-weighted integral over the
    annular time window (t0-4R^2, t0-R^2) and the WHOLE ball, normalized by
    R^d; quasi-monotone in R up to a defect and a boundary-controlled R^2
    term,
  * the plain density (1/R^d) int_{P_R} e, whose small-R persistence flags
    singular-suspect points.

Time integrals are taken over the piecewise-linear interpolant of the
per-checkpoint values, so window endpoints need not be checkpoint times;
a probe demands at least ~8 slices per window (stride dt <= R^2/8).
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from . import scheme
from .errors import ContainmentError, NumericsError
from .grid import RadialGrid, boundary_flux_terms, dirichlet_energy
from .solver import Trajectory


@dataclass(frozen=True)
class ParabolicCylinder:
    """Probe geometry: center (t0, x0) with |x0| = rho0, scale R."""

    t0: float
    rho0: float
    R: float

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("cylinder radius must be positive")
        if self.rho0 < 0:
            raise ValueError("center radius must be nonnegative")


# ---------------------------------------------------------------------------
# cached per-trajectory arrays

class _TrajArrays:
    def __init__(self, traj: Trajectory):
        grid, p = traj.grid, traj.params
        G, Z, ts = traj.G, traj.Z, traj.times
        h, d = grid.h, grid.d
        K = len(ts)

        def ddr(X):
            out = np.empty_like(X)
            out[:, 1:-1] = (X[:, 2:] - X[:, :-2]) / (2 * h)
            out[:, 0] = (-3 * X[:, 0] + 4 * X[:, 1] - X[:, 2]) / (2 * h)
            out[:, -1] = (3 * X[:, -1] - 4 * X[:, -2] + X[:, -3]) / (2 * h)
            return out

        self.gr = ddr(G)
        self.zr = ddr(Z)
        grad = self.gr ** 2 + self.zr ** 2
        grad[:, 1:] += (d - 1) * (G[:, 1:] / grid.r[1:]) ** 2
        grad[:, 0] = d * self.gr[:, 0] ** 2 + self.zr[:, 0] ** 2
        y = G ** 2 + Z ** 2
        lam_t = np.array([scheme.penalty_coefficient(p, float(t)) for t in ts])
        self.energy = 0.5 * grad + 0.25 * lam_t[:, None] * scheme.chi((y - 1.0) ** 2, p.chi_knots)
        self.Dg = np.zeros_like(G)
        self.Dz = np.zeros_like(Z)
        if K > 1:
            span = (ts[2:] - ts[:-2])[:, None]
            self.Dg[1:-1] = (G[2:] - G[:-2]) / span
            self.Dz[1:-1] = (Z[2:] - Z[:-2]) / span
            self.Dg[0] = (G[1] - G[0]) / (ts[1] - ts[0])
            self.Dz[0] = (Z[1] - Z[0]) / (ts[1] - ts[0])
            self.Dg[-1] = (G[-1] - G[-2]) / (ts[-1] - ts[-2])
            self.Dz[-1] = (Z[-1] - Z[-2]) / (ts[-1] - ts[-2])


_cache: "weakref.WeakKeyDictionary[Trajectory, _TrajArrays]" = weakref.WeakKeyDictionary()


def _arrays(traj: Trajectory) -> _TrajArrays:
    got = _cache.get(traj)
    if got is None:
        got = _TrajArrays(traj)
        _cache[traj] = got
    return got


# ---------------------------------------------------------------------------
# quadrature helpers

def _cap_node_weights(grid: RadialGrid, rho0: float, R: float, moment: int = 0) -> np.ndarray:
    """Node weights whose dot with per-node values equals the ball-restricted
    integral over B_R(x0) (moment 0) or its first angular moment (moment 1,
    d = 3 off-center)."""
    if rho0 > 0 and grid.d != 3:
        raise ContainmentError("off-axis probes need d = 3")
    rm = grid.r_mid
    if rho0 == 0.0:
        frac = (rm < R).astype(float) if moment == 0 else np.zeros_like(rm)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            if moment == 0:
                frac = np.clip((R * R - (rm - rho0) ** 2) / (4.0 * rm * rho0), 0.0, 1.0)
            else:
                cstar = (rm * rm + rho0 * rho0 - R * R) / (2.0 * rm * rho0)
                frac = np.where(np.abs(cstar) >= 1.0, 0.0,
                                (1.0 - np.clip(cstar, -1.0, 1.0) ** 2) / 4.0)
    cell = grid.omega * grid.h * rm ** (grid.d - 1) * frac
    w = np.zeros(grid.n + 1)
    w[:-1] += 0.5 * cell
    w[1:] += 0.5 * cell
    return w


def _time_integral(times: np.ndarray, vals: np.ndarray, a: float, b: float) -> float:
    """Integral over [a, b] of the piecewise-linear interpolant of
    (times, vals); [a, b] must lie inside the checkpoint range."""
    if a >= b:
        return 0.0
    if a < times[0] - 1e-12 or b > times[-1] + 1e-12:
        raise ContainmentError(f"time window [{a}, {b}] outside the recorded range "
                               f"[{times[0]}, {times[-1]}]")
    knots = np.concatenate([[a], times[(times > a) & (times < b)], [b]])
    vk = np.interp(knots, times, vals)
    return float(np.trapezoid(vk, knots))


def _check_slice_resolution(traj: Trajectory, R: float):
    if traj.n_checkpoints < 2:
        raise ContainmentError("probe needs a time-resolved trajectory")
    spacing = float(np.max(np.diff(traj.times)))
    if spacing > R * R / 8.0 + 1e-15:
        raise ContainmentError(
            f"checkpoint spacing {spacing:g} exceeds R^2/8 = {R * R / 8:g}: "
            f"probe windows need at least 8 slices (reduce checkpoint_stride)")


def _gauss_weight(grid: RadialGrid, rho0: float, t_minus_t0: float) -> np.ndarray:
    """Spherical average over each node shell of exp(|x-x0|^2/(4(t-t0))),
    t < t0.  On-axis this is exp(-r^2/(4|t-t0|)); off-axis (d = 3) the
    closed form [e^(-beta (r-rho0)^2) - e^(-beta (r+rho0)^2)]/(4 beta r rho0)."""
    beta = -1.0 / (4.0 * t_minus_t0)  # positive
    r = grid.r
    if rho0 == 0.0:
        return np.exp(-beta * r * r)
    x = 2.0 * beta * r * rho0
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (np.exp(-beta * (r - rho0) ** 2) - np.exp(-beta * (r + rho0) ** 2)) / (2.0 * x)
    small = x < 1e-8
    if np.any(small):
        w0 = np.exp(-beta * (r * r + rho0 * rho0)) * (1.0 + x * x / 6.0)
        w = np.where(small, w0, w)
    return w


# ---------------------------------------------------------------------------
# density-level entry points (testable against synthetic densities)

def weighted_density_integral(grid: RadialGrid, times: np.ndarray, densities: np.ndarray,
                              t0: float, rho0: float, R: float) -> float:
    """int_{t0-(2R)^2}^{t0-R^2} dt int_B density * exp(|x-x0|^2/(4(t-t0))) dx
    over the piecewise-linear-in-time slice values (not normalized)."""
    a, b = t0 - 4.0 * R * R, t0 - R * R
    idx = np.nonzero((times > a - 1e-300) & (times < b))[0]
    lo = max(int(idx[0]) - 1, 0) if len(idx) else 0
    hi = min((int(idx[-1]) + 2) if len(idx) else 1, len(times) - 1)
    ks = range(lo, hi + 1)
    sub_t = times[list(ks)]
    vals = np.array([
        float(np.dot(grid.quad_weights, densities[k] * _gauss_weight(grid, rho0, float(times[k]) - t0)))
        if times[k] < t0 else 0.0
        for k in ks
    ])
    return _time_integral(sub_t, vals, a, b)


def space_time_density_integral(grid: RadialGrid, times: np.ndarray, densities: np.ndarray,
                                t0: float, rho0: float, R: float,
                                window: float | None = None) -> float:
    """int over (t0-w, t0+w) x B_R(x0) of the density, w = window (default
    R^2), by cap-restricted ball integrals and linear-in-time interpolation."""
    w = R * R if window is None else window
    cap = _cap_node_weights(grid, rho0, R)
    vals = densities @ cap
    return _time_integral(times, vals, t0 - w, t0 + w)


# ---------------------------------------------------------------------------
# probe operations

def _check_mon_containment(traj: Trajectory, t0: float, R: float):
    if t0 - (2.0 * R) ** 2 <= 0.0:
        raise ContainmentError(
            f"scaled-energy window needs t0 - (2R)^2 > 0 (t0={t0:g}, R={R:g})")
    if t0 - R * R > traj.times[-1] + 1e-12:
        raise ContainmentError("scaled-energy window ends after the recorded horizon")


def scaled_energy(traj: Trajectory, cyl: ParabolicCylinder, R: float) -> float:
    """Backward-Gaussian-weighted scaled energy
    (1/R^d) int_{t0-(2R)^2}^{t0-R^2} int_B e * exp(|x-x0|^2/(4(t-t0)))."""
    _check_mon_containment(traj, cyl.t0, R)
    _check_slice_resolution(traj, R)
    if cyl.rho0 > 0 and traj.grid.d != 3:
        raise ContainmentError("off-axis probes need d = 3")
    if cyl.rho0 >= 1.0:
        raise ContainmentError("probe center must lie inside the unit ball")
    arrs = _arrays(traj)
    val = weighted_density_integral(traj.grid, traj.times, arrs.energy, cyl.t0, cyl.rho0, R)
    return val / R ** traj.grid.d


def flow_defect(traj: Trajectory, cyl: ParabolicCylinder, R1: float, R2: float) -> float:
    """Self-similarity defect between scales R1 < R2 (on-axis probes):

        int_{R1}^{R2} dR/R^(d-1) int int |D_t u + r u_r / (2(t-t0))|^2 Gauss.
    """
    if cyl.rho0 != 0.0:
        raise ContainmentError("flow_defect supports on-axis probes only (rho0 = 0)")
    if not R1 < R2:
        raise ValueError("need R1 < R2")
    _check_mon_containment(traj, cyl.t0, R2)
    _check_slice_resolution(traj, R1)
    Rs = np.linspace(R1, R2, 17)
    phis = [_defect_integrand(traj, cyl.t0, float(R)) for R in Rs]
    return float(np.trapezoid(phis, Rs))


def _defect_integrand(traj: Trajectory, t0: float, R: float) -> float:
    """(1/R^(d-1)) * time-space integral of the self-similarity defect over
    the scaled-energy window at scale R."""
    arrs = _arrays(traj)
    grid, times = traj.grid, traj.times
    a, b = t0 - 4.0 * R * R, t0 - R * R
    idx = np.nonzero((times > a) & (times < b))[0]
    lo = max(int(idx[0]) - 1, 0) if len(idx) else 0
    hi = min((int(idx[-1]) + 2) if len(idx) else 1, len(times) - 1)
    ks = list(range(lo, hi + 1))
    r = grid.r
    vals = []
    for k in ks:
        tk = float(times[k])
        if tk >= t0:
            vals.append(0.0)
            continue
        drift = r / (2.0 * (tk - t0))
        f = (arrs.Dg[k] + drift * arrs.gr[k]) ** 2 + (arrs.Dz[k] + drift * arrs.zr[k]) ** 2
        vals.append(float(np.dot(grid.quad_weights, f * _gauss_weight(grid, 0.0, tk - t0))))
    return _time_integral(times[ks], np.asarray(vals), a, b) / R ** (grid.d - 1)


@dataclass(frozen=True)
class MonotonicityReport:
    t0: float
    rho0: float
    ladder: tuple
    energies: tuple                  # E(R_i; z0)
    defects: np.ndarray              # D[i, j] for i < j, else 0
    fitted_cm: float                 # smallest C_M >= 0 making the ladder monotone
    structural_scale: float          # (tangential(u0) + int |grad u0|^2)/d0^(d+2)
    d0: float

    def adjusted(self) -> np.ndarray:
        """E(R_i) + C_M R_i^2 / 2, nondecreasing by construction of the fit."""
        R = np.asarray(self.ladder)
        return np.asarray(self.energies) + 0.5 * self.fitted_cm * R * R


def monotonicity_ladder(traj: Trajectory, z0: tuple[float, float], ladder) -> MonotonicityReport:
    """Scaled energies and pairwise defects on an increasing R ladder, plus
    the smallest C_M >= 0 with E(R_j) + C_M R_j^2/2 >= E(R_i) + D(i,j) +
    C_M R_i^2/2 for all i < j (C_M = 0 when strictly monotone)."""
    t0, rho0 = float(z0[0]), float(z0[1])
    if rho0 != 0.0:
        raise ContainmentError("monotonicity_ladder supports on-axis probes only (rho0 = 0)")
    ladder = tuple(float(R) for R in ladder)
    if len(ladder) < 2 or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be increasing with at least two scales")
    cyl = ParabolicCylinder(t0, rho0, ladder[0])
    E = tuple(scaled_energy(traj, cyl, R) for R in ladder)

    # cumulative defect integral on a refined shared grid
    grids = [np.linspace(a, b, 9) for a, b in zip(ladder, ladder[1:])]
    Rfine = np.unique(np.concatenate(grids))
    phi = np.array([_defect_integrand(traj, t0, float(R)) for R in Rfine])
    Phi = np.concatenate([[0.0], np.cumsum(0.5 * (phi[1:] + phi[:-1]) * np.diff(Rfine))])

    def cum(R):
        return float(np.interp(R, Rfine, Phi))

    m = len(ladder)
    D = np.zeros((m, m))
    need = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            D[i, j] = cum(ladder[j]) - cum(ladder[i])
            need = max(need, 2.0 * (E[i] + D[i, j] - E[j]) / (ladder[j] ** 2 - ladder[i] ** 2))
    fitted = max(0.0, need)

    f0 = traj.slice(0)
    _, tang0 = boundary_flux_terms(f0, traj.grid)
    bulk0 = 2.0 * dirichlet_energy(f0, traj.grid)
    d0 = 1.0 - rho0
    structural = (tang0 + bulk0) / d0 ** (traj.grid.d + 2)
    return MonotonicityReport(t0, rho0, ladder, E, D, fitted, structural, d0)


def _check_cylinder_containment(traj: Trajectory, cyl: ParabolicCylinder, scale: float):
    """P_scale(z0) compactly contained in (0, T) x B^d."""
    T = float(traj.times[-1])
    if cyl.t0 - scale * scale <= 0.0 or cyl.t0 + scale * scale >= T:
        raise ContainmentError(
            f"P_{scale:g}(t0={cyl.t0:g}) is not compactly contained in (0, {T:g})")
    if cyl.rho0 + scale >= 1.0:
        raise ContainmentError(f"B_{scale:g}(rho0={cyl.rho0:g}) pokes out of the unit ball")
    if cyl.rho0 > 0 and traj.grid.d != 3:
        raise ContainmentError("off-axis probes need d = 3")


def density(traj: Trajectory, cyl: ParabolicCylinder) -> float:
    """Plain cylinder density (1/R^d) int_{P_R(z0)} e dz (no Gaussian
    weight: exactly the quantity whose small-R persistence defines the
    singular-suspect set)."""
    _check_cylinder_containment(traj, cyl, cyl.R)
    _check_slice_resolution(traj, cyl.R)
    arrs = _arrays(traj)
    val = space_time_density_integral(traj.grid, traj.times, arrs.energy, cyl.t0, cyl.rho0, cyl.R)
    return val / cyl.R ** traj.grid.d


def local_energy_ratio(traj: Trajectory, cyl: ParabolicCylinder):
    """Local energy inequality data: lhs = int_{P_R} |du/dt|^2 + esssup_t
    int_{B_R} e; rhs_core = (1/R^2) int_{P_2R} e; empirical_C = lhs/rhs."""
    R = cyl.R
    _check_cylinder_containment(traj, cyl, 2.0 * R)
    _check_slice_resolution(traj, R)
    arrs = _arrays(traj)
    grid, times = traj.grid, traj.times
    capR = _cap_node_weights(grid, cyl.rho0, R)
    cap2R = _cap_node_weights(grid, cyl.rho0, 2.0 * R)
    ut2 = (arrs.Dg ** 2 + arrs.Dz ** 2) @ capR
    lhs_kin = _time_integral(times, ut2, cyl.t0 - R * R, cyl.t0 + R * R)
    in_win = (times >= cyl.t0 - R * R) & (times <= cyl.t0 + R * R)
    esssup = float(np.max(arrs.energy[in_win] @ capR))
    lhs = lhs_kin + esssup
    rhs = _time_integral(times, arrs.energy @ cap2R,
                         cyl.t0 - 4 * R * R, cyl.t0 + 4 * R * R) / (R * R)
    if lhs == 0.0 and rhs == 0.0:
        return 0.0, 0.0, math.nan
    return lhs, rhs, lhs / rhs


def _deviation_from_time_average(traj: Trajectory, cyl: ParabolicCylinder, scale: float) -> float:
    """int_{P_scale} |u - a(t)|^2 with a(t) the spatial average of u over
    B_scale(x0) per checkpoint (the L^2-minimizing comparator).  Deviations
    at the rounding floor of the plain |u|^2 integral collapse to 0."""
    grid, times = traj.grid, traj.times
    cap = _cap_node_weights(grid, cyl.rho0, scale)
    cap1 = _cap_node_weights(grid, cyl.rho0, scale, moment=1)
    V = float(np.sum(cap))
    G, Z = traj.G, traj.Z
    Ig = G @ cap1          # int g (xhat.e)
    Iz = Z @ cap           # int zeta
    Iq = (G * G + Z * Z) @ cap
    a_e = Ig / V
    a_z = Iz / V
    dev = Iq - 2.0 * a_e * Ig - 2.0 * a_z * Iz + (a_e ** 2 + a_z ** 2) * V
    a, b = cyl.t0 - scale * scale, cyl.t0 + scale * scale
    out = _time_integral(times, dev, a, b)
    floor = 1e-13 * _time_integral(times, Iq, a, b)
    return out if out > floor else 0.0


def reverse_poincare_ratio(traj: Trajectory, cyl: ParabolicCylinder):
    """Reverse-Poincare data: lhs = R^(d+2) * (1/R^d) int_{P_R} e = R^2
    int_{P_R} e; rhs = int_{P_2R} |u - a(t)|^2 with the slice-mean
    comparator; returns (lhs, rhs, lhs/rhs)."""
    R = cyl.R
    _check_cylinder_containment(traj, cyl, 2.0 * R)
    _check_slice_resolution(traj, R)
    arrs = _arrays(traj)
    grid, times = traj.grid, traj.times
    capR = _cap_node_weights(grid, cyl.rho0, R)
    lhs = R * R * _time_integral(times, arrs.energy @ capR, cyl.t0 - R * R, cyl.t0 + R * R)
    rhs = _deviation_from_time_average(traj, cyl, 2.0 * R)
    if lhs == 0.0 and rhs == 0.0:
        return 0.0, 0.0, math.nan
    return lhs, rhs, lhs / rhs if rhs > 0 else math.inf


def hybrid_ratio(traj: Trajectory, cyl: ParabolicCylinder, eps0: float) -> float:
    """Implied constant of the hybrid bound: the part of int_{P_R} e not
    absorbed by eps0 int_{P_2R} e, scaled by R^2 / int_{P_2R} |u - a|^2."""
    if not 0.0 < eps0 < 1.0:
        raise ValueError("eps0 must lie in (0, 1)")
    R = cyl.R
    _check_cylinder_containment(traj, cyl, 2.0 * R)
    _check_slice_resolution(traj, R)
    arrs = _arrays(traj)
    grid, times = traj.grid, traj.times
    capR = _cap_node_weights(grid, cyl.rho0, R)
    cap2R = _cap_node_weights(grid, cyl.rho0, 2.0 * R)
    ePR = _time_integral(times, arrs.energy @ capR, cyl.t0 - R * R, cyl.t0 + R * R)
    eP2R = _time_integral(times, arrs.energy @ cap2R, cyl.t0 - 4 * R * R, cyl.t0 + 4 * R * R)
    num = max(0.0, ePR - eps0 * eP2R)
    dev = _deviation_from_time_average(traj, cyl, 2.0 * R)
    if dev == 0.0:
        if num > 0.0:
            raise NumericsError("hybrid probe degenerate: energetic but spatially constant window")
        return 0.0
    return num * R * R / dev


# ---------------------------------------------------------------------------
# singular scan and parabolic box counting

@dataclass(frozen=True)
class SingularReport:
    centers: tuple                    # (t, rho) probe centers
    ladder: tuple                     # decreasing scales
    densities: np.ndarray             # (n_centers, n_ladder)
    eps0: float
    flagged: tuple                    # centers with density >= eps0 at every scale
    box_counts: tuple                 # ambient-adjusted N(R) per ladder scale
    box_counts_reduced: tuple         # raw counts in the (t, rho) plane
    dimension_slope: float | None     # slope of log N against log 1/R


def parabolic_box_count(points, R: float, d: int) -> tuple[int, float]:
    """Cover points of the reduced (t, rho) plane by parabolic boxes of time
    extent R^2 and space extent R.  Returns (reduced count, ambient count);
    the ambient count multiplies each box by the covering number of the
    latitude sphere it represents, 2^(d-1) * max(1, (rho/R)^(d-1))."""
    boxes: dict[tuple[int, int], float] = {}
    for t, rho in points:
        key = (int(math.floor(t / (R * R))), int(math.floor(rho / R)))
        boxes[key] = max(boxes.get(key, 0.0), rho)
    raw = len(boxes)
    ambient = sum(2.0 ** (d - 1) * max(1.0, (rho / R) ** (d - 1)) for rho in boxes.values())
    return raw, ambient


def box_count_slope(ladder, counts) -> float | None:
    """Least-squares slope of log N(R) against log(1/R); None when fewer
    than two scales carry a nonempty cover."""
    Rs = np.asarray(ladder, dtype=float)
    Ns = np.asarray(counts, dtype=float)
    keep = Ns > 0
    if np.sum(keep) < 2:
        return None
    x = np.log(1.0 / Rs[keep])
    y = np.log(Ns[keep])
    return float(np.polyfit(x, y, 1)[0])


def singular_scan(traj: Trajectory, eps0: float, R_ladder, center_grid) -> SingularReport:
    """Flag probe centers whose plain density stays >= eps0 at every ladder
    scale, then box-count the flagged set in the parabolic metric."""
    ladder = tuple(float(R) for R in R_ladder)
    if len(ladder) == 0:
        raise ValueError("R ladder must be nonempty")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("R ladder must be strictly decreasing")
    if ladder[-1] < 4.0 * traj.grid.h:
        raise ValueError(f"smallest scale {ladder[-1]:g} under-resolves the grid "
                         f"(need >= 4 cells = {4 * traj.grid.h:g})")
    centers = tuple((float(t), float(rho)) for t, rho in center_grid)
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    for t, rho in centers:
        _check_cylinder_containment(traj, ParabolicCylinder(t, rho, ladder[0]), ladder[0])
    dens = np.empty((len(centers), len(ladder)))
    for i, (t, rho) in enumerate(centers):
        for j, R in enumerate(ladder):
            dens[i, j] = density(traj, ParabolicCylinder(t, rho, R))
    flag_mask = np.all(dens >= eps0, axis=1)
    flagged = tuple(c for c, keep in zip(centers, flag_mask) if keep)
    raw, amb = [], []
    for R in ladder:
        r_count, a_count = parabolic_box_count(flagged, R, traj.grid.d) if flagged else (0, 0.0)
        raw.append(r_count)
        amb.append(a_count)
    slope = box_count_slope(ladder, amb)
    return SingularReport(centers, ladder, dens, eps0, flagged,
                          tuple(amb), tuple(raw), slope)

"""Global (whole-ball, whole-interval) checks of the flow's structural
estimates on completed runs.

Everything here is read-only over immutable trajectories.  Inequality checks
report numbers; acceptance thresholds live in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import scheme
from .grid import (
    ball_integral,
    boundary_flux_terms,
    dirichlet_energy,
    gl_energy_density,
    gradient_density,
)
from .solver import Trajectory, radial_stencils

_CONST_BOUNDARY_TOL = 1e-13


@dataclass(frozen=True)
class EnergyLedger:
    """Per-checkpoint energies and running integrals of a trajectory."""

    times: np.ndarray
    E_dir: np.ndarray
    E_pen: np.ndarray
    E_total: np.ndarray
    kinetic: np.ndarray
    dissipation: np.ndarray
    constraint_sup: np.ndarray      # sup_x (1 - |u|^2) per slice
    penalty_integral: np.ndarray

    def row_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a checkpoint time of this ledger")
        return k


def build_ledger(traj: Trajectory) -> EnergyLedger:
    """One row per checkpoint; accumulators are copied from the trajectory."""
    p, grid = traj.params, traj.grid
    K = traj.n_checkpoints
    E_dir = np.empty(K)
    E_pen = np.empty(K)
    E_tot = np.empty(K)
    sup = np.empty(K)
    for k in range(K):
        f = traj.slice(k)
        y = f.modulus_sq
        lam_t = scheme.penalty_coefficient(p, f.t)
        pen_density = 0.25 * lam_t * scheme.chi((y - 1.0) ** 2, p.chi_knots)
        E_dir[k] = dirichlet_energy(f, grid)
        E_pen[k] = ball_integral(grid, pen_density)
        E_tot[k] = ball_integral(grid, 0.5 * gradient_density(f, grid) + pen_density)
        sup[k] = float(np.max(1.0 - y))
    return EnergyLedger(traj.times.copy(), E_dir, E_pen, E_tot,
                        traj.kinetic.copy(), traj.dissipation.copy(), sup,
                        traj.penalty_integral.copy())


def check_energy_identity(ledger: EnergyLedger, t1: float, t2: float) -> float:
    """Residual of the exact energy balance between two checkpoints:

        [kin(t2)-kin(t1)] + E(t2) + [dis(t2)-dis(t1)] - E(t1)

    which vanishes identically for the continuum flow."""
    if t1 > t2:
        raise ValueError("need t1 <= t2")
    k1 = ledger.row_index(t1)
    k2 = ledger.row_index(t2)
    return float((ledger.kinetic[k2] - ledger.kinetic[k1]) + ledger.E_total[k2]
                 + (ledger.dissipation[k2] - ledger.dissipation[k1]) - ledger.E_total[k1])


def penalty_bound_check(ledger: EnergyLedger, p: scheme.SchemeParams):
    """Decay of the penalty integral: P * log(lambda) against the cap
    4 pi (1+T^2) E(0) that the energy balance forces (the exponent rate
    kappa_dot is at least 1/(pi (1+T^2)) on [0, T])."""
    P = float(ledger.penalty_integral[-1])
    C_derived = 4.0 * math.pi * (1.0 + p.T ** 2) * float(ledger.E_total[0])
    margin = P * p.log_lam / C_derived if C_derived > 0 else 0.0
    return P, C_derived, margin


def _require_constant_boundary(traj: Trajectory, what: str):
    if abs(traj.G[0][-1]) > _CONST_BOUNDARY_TOL:
        raise ValueError(
            f"{what} requires a constant boundary map (equatorial boundary value "
            f"g(1)={traj.G[0][-1]:g} != 0); use the bubble or constant datum")


def energy_decay_check(traj: Trajectory) -> float:
    """Weighted energy decay for constant-boundary data: the quantity
    Q(t) = e^((d-2)t) * int e_lam (r^2+1) never exceeds Q(0).
    Returns the worst checkpoint violation (Q(t)-Q(0))/Q(0)."""
    _require_constant_boundary(traj, "energy_decay_check")
    p, grid = traj.params, traj.grid
    Q = np.empty(traj.n_checkpoints)
    wgt = grid.r ** 2 + 1.0
    for k in range(traj.n_checkpoints):
        f = traj.slice(k)
        Q[k] = math.exp((grid.d - 2) * f.t) * ball_integral(grid, gl_energy_density(f, p, grid) * wgt)
    if Q[0] == 0.0:
        return 0.0
    return float(np.max((Q - Q[0]) / Q[0]))


def pokhojaev_check(traj: Trajectory) -> tuple[float, float]:
    """Boundary-flux inequality: time integral of the normal boundary
    gradient against T * tangential(u0) + (1/2) int |grad u0|^2 (r^2+1)."""
    grid = traj.grid
    normals = np.array([boundary_flux_terms(traj.slice(k), grid)[0]
                        for k in range(traj.n_checkpoints)])
    lhs = float(np.trapezoid(normals, traj.times)) if traj.n_checkpoints > 1 else 0.0
    f0 = traj.slice(0)
    _, tangential0 = boundary_flux_terms(f0, grid)
    T = float(traj.times[-1])
    rhs = T * tangential0 + 0.5 * ball_integral(grid, gradient_density(f0, grid) * (grid.r ** 2 + 1.0))
    return lhs, rhs


def longtime_decay_check(traj: Trajectory) -> float:
    """Exponential gradient decay for constant-boundary data in d >= 3:
    int |grad u(t)|^2 <= 2 e^(-(d-2)t) int |grad u0|^2.  Returns the worst
    checkpoint excess normalized by int |grad u0|^2."""
    if traj.grid.d < 3:
        raise ValueError("longtime_decay_check needs d >= 3 (the decay rate d-2 degenerates in d=2)")
    _require_constant_boundary(traj, "longtime_decay_check")
    grid = traj.grid
    grad2 = np.array([2.0 * dirichlet_energy(traj.slice(k), grid)
                      for k in range(traj.n_checkpoints)])
    if grad2[0] == 0.0:
        return 0.0
    bound = 2.0 * np.exp(-(grid.d - 2) * traj.times) * grad2[0]
    return float(np.max((grad2 - bound) / grad2[0]))


def wedge_residual(traj: Trajectory) -> float:
    """Scheme-consistency residual of the wedge identity: the penalty force
    is parallel to u, so w = (D_t g - L g) zeta - (D_t zeta - L0 zeta) g
    vanishes for the exact flow.  Returns the L^2(Q) norm of the discrete w
    over interior checkpoints."""
    if traj.n_checkpoints < 3:
        raise ValueError("wedge_residual needs at least 3 checkpoints")
    grid = traj.grid
    (a_g, c_g, zc_g), (a_z, c_z, zc_z) = radial_stencils(grid)
    G, Z, ts = traj.G, traj.Z, traj.times

    def apply(st, X):
        a, c, zc = st
        out = zc * X
        out[:, :-1] += c[:-1] * (X[:, 1:] - X[:, :-1])
        out[:, 1:] += a[1:] * (X[:, :-1] - X[:, 1:])
        return out

    LG = apply((a_g, c_g, zc_g), G)
    LZ = apply((a_z, c_z, zc_z), Z)
    span = (ts[2:] - ts[:-2])[:, None]
    DG = (G[2:] - G[:-2]) / span
    DZ = (Z[2:] - Z[:-2]) / span
    w = (DG - LG[1:-1]) * Z[1:-1] - (DZ - LZ[1:-1]) * G[1:-1]
    total = 0.0
    for j, k in enumerate(range(1, traj.n_checkpoints - 1)):
        dtk = 0.5 * (ts[k + 1] - ts[k - 1])
        total += dtk * ball_integral(grid, w[j] ** 2)
    return math.sqrt(total)


def constraint_violation(traj: Trajectory) -> tuple[float, float]:
    """sup and L^2(Q) norms of (1 - |u|^2) over the checkpoints."""
    grid = traj.grid
    viol = 1.0 - (traj.G ** 2 + traj.Z ** 2)
    sup = float(np.max(viol))
    q = np.array([ball_integral(grid, viol[k] ** 2) for k in range(traj.n_checkpoints)])
    l2 = math.sqrt(float(np.trapezoid(q, traj.times))) if traj.n_checkpoints > 1 else 0.0
    return sup, l2


def max_energy_increase(ledger: EnergyLedger) -> float:
    """Worst relative increase of E_total between consecutive checkpoints
    (<= 0 when the run is monotonically dissipative)."""
    if len(ledger.times) < 2:
        return 0.0
    scale = max(float(ledger.E_total[0]), 1e-300)
    return float(np.max(np.diff(ledger.E_total)) / scale)


def compare_L2(a: Trajectory, b: Trajectory) -> float:
    """L^2(Q) distance of two runs sharing grid and checkpoint times."""
    if a.grid != b.grid:
        raise ValueError("compare_L2 requires identical grids")
    if a.n_checkpoints != b.n_checkpoints or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("compare_L2 requires identical checkpoint times")
    q = np.array([ball_integral(a.grid, (a.G[k] - b.G[k]) ** 2 + (a.Z[k] - b.Z[k]) ** 2)
                  for k in range(a.n_checkpoints)])
    if a.n_checkpoints == 1:
        return 0.0
    return math.sqrt(float(np.trapezoid(q, a.times)))

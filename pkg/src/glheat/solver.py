"""Time integration of the penalized flow in the corotational reduction.

The full step is either a strang splitting

    heat(dt/2) o penalty(dt) o heat(dt/2)

with the stiff penalty substep solved in closed form (logistic in |u|^2
where the cutoff derivative is 1), or a single backward-Euler solve with the
reaction coefficient frozen from the previous slice (imex).  Heat substeps
are backward Euler on the radial operators

    L  g = g_rr + (d-1)/r g_r - (d-1)/r^2 g      (equatorial profile)
    L0 z = z_rr + (d-1)/r z_r                    (polar profile)

with g(0) = 0, dz/dr(0) = 0 by ghost reflection, and Dirichlet data at r = 1
taken from the initial datum.  The backward-Euler matrices are M-matrices by
construction, which is what propagates |u| <= 1 from admissible data.

Kinetic and dissipation integrals are accumulated online once per step (see
_kernels.fallback for the exact order), so checkpoint layout cannot change
them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, scheme
from .errors import ConfigError, NumericsError
from .grid import CorotationalField, InitialDatum, RadialGrid

_SCHEME_IDS = {"strang": 0, "imex": 1}


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    scheme: str = "strang"
    checkpoint_stride: int = 1
    newton_tol: float = 1e-12

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive (got {self.dt})")
        if self.scheme not in _SCHEME_IDS:
            raise ValueError(f"scheme must be one of {sorted(_SCHEME_IDS)} (got {self.scheme!r})")
        if int(self.checkpoint_stride) != self.checkpoint_stride or self.checkpoint_stride < 1:
            raise ValueError(f"checkpoint_stride must be a positive integer (got {self.checkpoint_stride})")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")


def radial_stencils(grid: RadialGrid):
    """Difference-form stencils (a, c, zc) of the two radial operators:
    L x |_i = a_i (x_{i-1} - x_i) + c_i (x_{i+1} - x_i) + zc_i x_i.

    Row 0 of the polar operator is the ghost-reflection origin row
    2d (x_1 - x_0)/h^2; row 0 of the equatorial operator and both row n are
    identity rows of the backward-Euler matrix (all-zero stencil).  Where the
    centered drift would break nonnegativity of the off-diagonals (only
    possible for d >= 4 at i < (d-1)/2) the drift is differenced one-sided.
    """
    n, d, h = grid.n, grid.d, grid.h
    inv_h2 = 1.0 / (h * h)
    a_g = np.zeros(n + 1)
    c_g = np.zeros(n + 1)
    zc_g = np.zeros(n + 1)
    a_z = np.zeros(n + 1)
    c_z = np.zeros(n + 1)
    zc_z = np.zeros(n + 1)
    i = np.arange(1, n)
    r = grid.r[1:-1]
    drift = (d - 1) / (2.0 * h * r)
    centered = drift <= inv_h2
    a_int = np.where(centered, inv_h2 - drift, inv_h2)
    c_int = np.where(centered, inv_h2 + drift, inv_h2 + 2.0 * drift)
    a_g[1:-1] = a_int
    c_g[1:-1] = c_int
    zc_g[1:-1] = -(d - 1) / (r * r)
    a_z[1:-1] = a_int
    c_z[1:-1] = c_int
    c_z[0] = 2.0 * d * inv_h2
    for arr in (a_g, c_g, zc_g, a_z, c_z, zc_z):
        arr.setflags(write=False)
    return (a_g, c_g, zc_g), (a_z, c_z, zc_z)


def apply_radial_operator(grid: RadialGrid, x, which: str) -> np.ndarray:
    """Apply the discrete operator of the heat substep ('g' or 'zeta');
    the two boundary rows return 0."""
    (a_g, c_g, zc_g), (a_z, c_z, zc_z) = radial_stencils(grid)
    a, c, zc = (a_g, c_g, zc_g) if which == "g" else (a_z, c_z, zc_z)
    x = np.asarray(x, dtype=float)
    out = zc * x
    out[:-1] += c[:-1] * (x[1:] - x[:-1])
    out[1:] += a[1:] * (x[:-1] - x[1:])
    return out


def heat_substep(f: CorotationalField, dt_sub: float, grid: RadialGrid) -> CorotationalField:
    """One backward-Euler solve of the linear part, boundary values held at
    the field's current (datum) values."""
    from ._kernels import fallback

    st_g, st_z = radial_stencils(grid)
    ab_g = fallback._build_banded(dt_sub, *st_g)
    ab_z = fallback._build_banded(dt_sub, *st_z)
    if not (fallback._m_matrix_ok(ab_g) and fallback._m_matrix_ok(ab_z)):
        raise NumericsError("backward-Euler matrix is not an M-matrix: stencil bug")
    g = f.g.copy()
    z = f.zeta.copy()
    fallback._heat_defect(g, dt_sub, *st_g, ab_g)
    fallback._heat_defect(z, dt_sub, *st_z, ab_z)
    return CorotationalField(f.t, g, z)


def penalty_substep(f: CorotationalField, dt_sub: float, p: scheme.SchemeParams,
                    newton_tol: float = 1e-12) -> CorotationalField:
    """Exact pointwise penalty substep with the coefficient frozen at f.t:
    direction preserved, modulus squared logistic where chi_dot = 1."""
    from ._kernels import fallback
    from numpy.polynomial import polynomial as P

    lam_t = scheme.penalty_coefficient(p, f.t)
    chic = p.chi_coeffs()
    s0, s1 = p.chi_knots[0][0], p.chi_knots[1][0]
    g = f.g.copy()
    z = f.zeta.copy()
    ok = fallback._penalty_update(g, z, lam_t, dt_sub, chic, P.polyder(chic),
                                  P.polyder(P.polyder(chic)), s0, s1, newton_tol)
    if not ok:
        raise NumericsError("penalty substep: bisection failed to converge")
    return CorotationalField(f.t, g, z)


def step(f: CorotationalField, cfg: StepperConfig, p: scheme.SchemeParams,
         grid: RadialGrid) -> CorotationalField:
    """One full step from f.t to f.t + dt.

    strang: heat(dt/2) o penalty(dt) o heat(dt/2), the penalty coefficient
    frozen at the step start.  imex: one backward-Euler solve with the
    reaction coefficient frozen from the previous slice on the diagonal.
    """
    if f.t + cfg.dt > p.T * (1 + 1e-12) + 1e-300:
        raise ValueError(f"step from t={f.t} would pass the horizon T={p.T}")
    if cfg.scheme == "strang":
        half = 0.5 * cfg.dt
        out = heat_substep(f, half, grid)
        out = penalty_substep(out, cfg.dt, p, cfg.newton_tol)
        out = heat_substep(out, half, grid)
        return CorotationalField(f.t + cfg.dt, out.g.copy(), out.zeta.copy())

    from numpy.polynomial import polynomial as P

    from ._kernels import fallback

    st_g, st_z = radial_stencils(grid)
    lam_t = scheme.penalty_coefficient(p, f.t)
    chic = p.chi_coeffs()
    s0, s1 = p.chi_knots[0][0], p.chi_knots[1][0]
    y = f.modulus_sq
    react = lam_t * fallback._chi_dot_vec((y - 1.0) ** 2, P.polyder(chic), s0, s1) * (y - 1.0)
    react[0] = 0.0
    react[-1] = 0.0
    react_z = react.copy()
    react_z[0] = lam_t * fallback._chi_dot_scalar((y[0] - 1.0) ** 2, P.polyder(chic), s0, s1) * (y[0] - 1.0)
    g = f.g.copy()
    z = f.zeta.copy()
    if not (fallback._imex_step(g, cfg.dt, *st_g, react)
            and fallback._imex_step(z, cfg.dt, *st_z, react_z)):
        raise NumericsError("imex matrix lost diagonal dominance: dt too large for this lambda")
    return CorotationalField(f.t + cfg.dt, g, z)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Immutable run record: checkpointed slices plus the online-accumulated
    kinetic, dissipation and penalty integrals at each checkpoint."""

    params: scheme.SchemeParams
    grid: RadialGrid
    config: StepperConfig
    times: np.ndarray          # (K,) checkpoint times, strictly increasing
    G: np.ndarray              # (K, n+1) equatorial profiles
    Z: np.ndarray              # (K, n+1) polar profiles
    kinetic: np.ndarray        # (K,) running sum of dt * |du/dt|^2 integrals
    dissipation: np.ndarray    # (K,) running chi-dissipation integral
    penalty_integral: np.ndarray  # (K,) running integral of lam^(1-k) chi(...)
    datum: InitialDatum | None = None

    def __post_init__(self):
        for name in ("times", "G", "Z", "kinetic", "dissipation", "penalty_integral"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("checkpoint times must be strictly increasing")

    @property
    def n_checkpoints(self) -> int:
        return len(self.times)

    def slice(self, k: int) -> CorotationalField:
        return CorotationalField(float(self.times[k]), self.G[k].copy(), self.Z[k].copy())

    @property
    def kinetic_final(self) -> float:
        return float(self.kinetic[-1])

    @property
    def dissipation_final(self) -> float:
        return float(self.dissipation[-1])

    @property
    def penalty_integral_final(self) -> float:
        return float(self.penalty_integral[-1])

    def checkpoint_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a checkpoint time of this trajectory")
        return k


def run(p: scheme.SchemeParams, grid: RadialGrid, cfg: StepperConfig,
        datum: InitialDatum) -> Trajectory:
    """Integrate to T, checkpointing every stride steps (the final partial
    block is checkpointed regardless).  Deterministic: same inputs, bitwise
    same trajectory."""
    if grid.d != p.d:
        raise ConfigError(f"grid dimension {grid.d} != scheme dimension {p.d}")
    f0 = datum.build(grid)
    if p.T == 0:
        z1 = np.zeros(1)
        return Trajectory(p, grid, cfg, np.zeros(1), f0.g[None, :].copy(), f0.zeta[None, :].copy(),
                          z1, z1.copy(), z1.copy(), datum=datum)
    nsteps = round(p.T / cfg.dt)
    if nsteps < 1 or abs(nsteps * cfg.dt - p.T) > 1e-9 * max(p.T, 1.0):
        raise ConfigError(f"dt={cfg.dt} must divide the horizon T={p.T}")

    st_g, st_z = radial_stencils(grid)
    chic = p.chi_coeffs()
    s0, s1 = p.chi_knots[0][0], p.chi_knots[1][0]
    sid = _SCHEME_IDS[cfg.scheme]
    g = f0.g.copy()
    z = f0.zeta.copy()
    accum = np.zeros(4)

    times = [0.0]
    Gs = [g.copy()]
    Zs = [z.copy()]
    kin = [0.0]
    dis = [0.0]
    pen = [0.0]

    done = 0
    stride = cfg.checkpoint_stride
    while done < nsteps:
        block = min(stride, nsteps - done)
        rc = _kernels.advance(g, z, done, block, cfg.dt, sid, p.log_lam, chic, s0, s1,
                              *st_g, *st_z, grid.quad_weights, cfg.newton_tol, accum)
        if rc >= 0:
            code = int(accum[3])
            reason = "non-finite field values (dt too large for this scheme?)" if code == 1 \
                else "factorization/penalty-solve failure"
            raise NumericsError(f"run aborted at step {rc}: {reason}")
        done += block
        times.append(done * cfg.dt)
        Gs.append(g.copy())
        Zs.append(z.copy())
        kin.append(accum[0])
        dis.append(accum[1])
        pen.append(accum[2])

    return Trajectory(p, grid, cfg, np.array(times), np.array(Gs), np.array(Zs),
                      np.array(kin), np.array(dis), np.array(pen), datum=datum)

"""Radial discretization of the unit ball and all spatial quadrature.

Fields live on a uniform radial grid r_i = i/n, i = 0..n, and represent the
equivariant two-profile map

    u(x) = ( g(|x|) x/|x| ,  zeta(|x|) )  :  B^d -> R^(d+1).

Volume integrals of radial densities use the composite midpoint rule on the
n cells, with midpoint values obtained by linear interpolation of the node
values; that makes every integral a fixed dot product with precomputed node
weights.  Off-center balls (d = 3) are handled by the exact spherical-cap
area fraction of each shell, so no angular quadrature is ever needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import scheme
from .errors import ConfigError


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^(d-1): 2 pi^(d/2) / Gamma(d/2)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


class RadialGrid:
    """Uniform radial grid on [0, 1] with cached quadrature weights."""

    def __init__(self, n: int, d: int):
        if n < 16:
            raise ValueError(f"need at least 16 cells (got n={n})")
        if int(d) != d or d < 2:
            raise ValueError(f"dimension d must be an integer >= 2 (got {d})")
        self.n = int(n)
        self.d = int(d)
        self.h = 1.0 / self.n
        self.r = np.arange(self.n + 1, dtype=float) * self.h
        self.r_mid = (np.arange(self.n, dtype=float) + 0.5) * self.h
        self.omega = sphere_area(self.d)
        # node weights equivalent to midpoint rule + linear interpolation
        cell = self.omega * self.h * self.r_mid ** (self.d - 1)
        w = np.zeros(self.n + 1)
        w[:-1] += 0.5 * cell
        w[1:] += 0.5 * cell
        self.quad_weights = w
        for a in (self.r, self.r_mid, self.quad_weights):
            a.setflags(write=False)

    def __eq__(self, other):
        return isinstance(other, RadialGrid) and self.n == other.n and self.d == other.d

    def __repr__(self):
        return f"RadialGrid(n={self.n}, d={self.d})"


def ball_integral(grid: RadialGrid, F) -> float:
    """Integral of a radial density over the unit ball:
    omega_{d-1} * int_0^1 F(r) r^(d-1) dr by the composite midpoint rule."""
    F = np.asarray(F, dtype=float)
    if F.shape != (grid.n + 1,):
        raise ValueError(f"expected {grid.n + 1} node values, got shape {F.shape}")
    if not np.all(np.isfinite(F)):
        raise ValueError("ball_integral requires finite node values")
    return float(np.dot(grid.quad_weights, F))


def radial_derivative(grid: RadialGrid, f) -> np.ndarray:
    """Second-order derivative: centered interior, one-sided at both ends."""
    f = np.asarray(f, dtype=float)
    h = grid.h
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return out


@dataclass(frozen=True)
class CorotationalField:
    """One time slice of the reduced flow: profiles g (equatorial) and zeta
    (polar) at the grid nodes, with time stamp t."""

    t: float
    g: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(self.g, dtype=float)
        z = np.ascontiguousarray(self.zeta, dtype=float)
        if g.shape != z.shape or g.ndim != 1:
            raise ValueError("g and zeta must be 1-d arrays of equal length")
        if abs(g[0]) > 1e-13:
            raise ValueError(f"regularity requires g(0) = 0 (got {g[0]})")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "zeta", z)
        g.setflags(write=False)
        z.setflags(write=False)

    @property
    def modulus_sq(self) -> np.ndarray:
        return self.g * self.g + self.zeta * self.zeta


@dataclass(frozen=True)
class InitialDatum:
    """Built-in or file-backed datum; build() produces the t=0 slice."""

    kind: str
    amplitude: float | None = None
    path: str | None = None

    @staticmethod
    def equator() -> "InitialDatum":
        return InitialDatum("equator")

    @staticmethod
    def bubble(amplitude: float) -> "InitialDatum":
        return InitialDatum("bubble", amplitude=float(amplitude))

    @staticmethod
    def constant() -> "InitialDatum":
        return InitialDatum("constant")

    @staticmethod
    def custom(path: str) -> "InitialDatum":
        return InitialDatum("custom", path=str(path))

    def build(self, grid: RadialGrid) -> CorotationalField:
        n = grid.n
        if self.kind == "equator":
            # x/|x| into the equatorial sphere; node 0 carries the regular
            # value 0 (the midpoint quadrature never needs 1/r there)
            g = np.ones(n + 1)
            g[0] = 0.0
            return CorotationalField(0.0, g, np.zeros(n + 1))
        if self.kind == "bubble":
            if self.amplitude is None:
                raise ValueError("bubble datum needs an amplitude")
            h0 = self.amplitude * grid.r * (1.0 - grid.r) ** 2
            return CorotationalField(0.0, np.sin(h0), np.cos(h0))
        if self.kind == "constant":
            return CorotationalField(0.0, np.zeros(n + 1), np.ones(n + 1))
        if self.kind == "custom":
            return _load_custom(self.path, grid)
        raise ValueError(f"unknown datum kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "bubble":
            return f"bubble:{self.amplitude:g}"
        if self.kind == "custom":
            return f"custom:{self.path}"
        return self.kind


def _load_custom(path: str, grid: RadialGrid) -> CorotationalField:
    """Plain-text datum: one 'r g zeta' line per node, r matching the grid.

    The built-in data are smooth up to the boundary; a file-backed datum is
    only checked for finiteness, grid consistency and the origin condition,
    not for boundary smoothness (which the decay diagnostics presume)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read datum file {path}: {exc}") from exc
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 3:
            raise ConfigError(f"{path}:{lineno}: expected 'r g zeta', got {raw.strip()!r}")
        try:
            rows.append((float(parts[0]), float(parts[1]), float(parts[2]), lineno))
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    if len(rows) != grid.n + 1:
        raise ConfigError(f"{path}: expected {grid.n + 1} node lines, found {len(rows)}")
    g = np.empty(grid.n + 1)
    z = np.empty(grid.n + 1)
    prev_r = -np.inf
    for i, (r, gv, zv, lineno) in enumerate(rows):
        if abs(r - grid.r[i]) > 1e-9 * max(1.0, grid.h):
            raise ConfigError(f"{path}:{lineno}: r={r} does not match grid node {grid.r[i]}")
        if r <= prev_r:
            raise ConfigError(f"{path}:{lineno}: radii must be strictly increasing")
        prev_r = r
        g[i], z[i] = gv, zv
    if abs(g[0]) > 1e-13:
        raise ConfigError(f"{path}: first node must have g = 0 (regularity), got {g[0]}")
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(z))):
        raise ConfigError(f"{path}: non-finite datum values")
    return CorotationalField(0.0, g, z)


def gradient_density(f: CorotationalField, grid: RadialGrid) -> np.ndarray:
    """|grad u|^2 per node: g_r^2 + zeta_r^2 + (d-1) g^2/r^2, with the
    regular limit d*g_r(0)^2 + zeta_r(0)^2 at the origin (g(0) = 0)."""
    d = grid.d
    gr = radial_derivative(grid, f.g)
    zr = radial_derivative(grid, f.zeta)
    out = gr * gr + zr * zr
    out[1:] += (d - 1) * (f.g[1:] / grid.r[1:]) ** 2
    out[0] = d * gr[0] * gr[0] + zr[0] * zr[0]
    return out


def dirichlet_energy(f: CorotationalField, grid: RadialGrid) -> float:
    """(1/2) * integral of |grad u|^2 over the ball."""
    return 0.5 * ball_integral(grid, gradient_density(f, grid))


def gl_energy_density(f: CorotationalField, p: scheme.SchemeParams, grid: RadialGrid) -> np.ndarray:
    """Per-node energy density (1/2)|grad u|^2 + (lam^(1-kappa)/4) chi((|u|^2-1)^2)."""
    lam_t = scheme.penalty_coefficient(p, f.t)
    y = f.modulus_sq
    pen = 0.25 * lam_t * scheme.chi((y - 1.0) ** 2, p.chi_knots)
    return 0.5 * gradient_density(f, grid) + pen


def _cap_fraction(r: np.ndarray, rho0: float, R: float) -> np.ndarray:
    """Area fraction of the shell of radius r inside the ball B_R(x0),
    |x0| = rho0: clip((R^2 - (r - rho0)^2) / (4 r rho0), 0, 1)."""
    if rho0 == 0.0:
        return (r < R).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = (R * R - (r - rho0) ** 2) / (4.0 * r * rho0)
    frac = np.where(r > 0, frac, float(rho0 < R))
    return np.clip(frac, 0.0, 1.0)


def _check_offcenter(grid: RadialGrid, rho0: float, R: float):
    if rho0 < 0:
        raise ValueError(f"center radius must be nonnegative (got {rho0})")
    if R <= 0:
        raise ValueError(f"ball radius must be positive (got {R})")
    if rho0 + R > 1.0 + 1e-12:
        raise ValueError(f"ball B_{R}(rho0={rho0}) is not contained in the unit ball")
    if rho0 > 0 and grid.d != 3:
        raise ValueError("off-center balls need d = 3 (exact cap formula); use rho0 = 0")


def offcenter_ball_average(grid: RadialGrid, F, rho0: float, R: float) -> float:
    """Integral of the radial density F over the ball B_R(x0), |x0| = rho0.

    Shells are weighted by the exact cap fraction (d = 3); centered balls
    (rho0 = 0, any d) use the plain indicator at cell midpoints.
    """
    _check_offcenter(grid, rho0, R)
    F = np.asarray(F, dtype=float)
    if F.shape != (grid.n + 1,):
        raise ValueError(f"expected {grid.n + 1} node values, got shape {F.shape}")
    if not np.all(np.isfinite(F)):
        raise ValueError("offcenter_ball_average requires finite node values")
    rm = grid.r_mid
    F_mid = 0.5 * (F[:-1] + F[1:])
    frac = _cap_fraction(rm, rho0, R)
    return float(np.sum(grid.omega * grid.h * rm ** (grid.d - 1) * F_mid * frac))


def offcenter_ball_c_moment(grid: RadialGrid, F, rho0: float, R: float) -> float:
    """First angular moment int_{B_R(x0)} F(|x|) (xhat . e) dx with e the
    center direction (d = 3).  Zero for centered balls by symmetry."""
    _check_offcenter(grid, rho0, R)
    if rho0 == 0.0:
        return 0.0
    F = np.asarray(F, dtype=float)
    rm = grid.r_mid
    F_mid = 0.5 * (F[:-1] + F[1:])
    # per-shell average of c over the cap c >= c*: (1 - c*^2)/4, with the
    # full-shell (c* <= -1) value 0 and empty-shell (c* >= 1) value 0
    with np.errstate(divide="ignore", invalid="ignore"):
        cstar = (rm * rm + rho0 * rho0 - R * R) / (2.0 * rm * rho0)
    m1 = np.where(cstar >= 1.0, 0.0, np.where(cstar <= -1.0, 0.0, (1.0 - np.clip(cstar, -1.0, 1.0) ** 2) / 4.0))
    return float(np.sum(grid.omega * grid.h * rm ** (grid.d - 1) * F_mid * m1))


def boundary_flux_terms(f: CorotationalField, grid: RadialGrid) -> tuple[float, float]:
    """Boundary-sphere integrals (normal, tangential):

    normal = omega_{d-1} (g_r(1)^2 + zeta_r(1)^2)   [one-sided stencil]
    tangential = omega_{d-1} (d-1) g(1)^2
    """
    h = grid.h
    gr1 = (3.0 * f.g[-1] - 4.0 * f.g[-2] + f.g[-3]) / (2.0 * h)
    zr1 = (3.0 * f.zeta[-1] - 4.0 * f.zeta[-2] + f.zeta[-3]) / (2.0 * h)
    normal = grid.omega * (gr1 * gr1 + zr1 * zr1)
    tangential = grid.omega * (grid.d - 1) * f.g[-1] ** 2
    return float(normal), float(tangential)

"""Pure numpy/scipy time-stepping kernels.

Mirrors the compiled core in `_core.pyx`: same step structure, same
accumulator update order (running totals advance once per step, so results
do not depend on how steps are grouped into checkpoint blocks).  Tridiagonal
systems go through LAPACK via scipy.linalg.solve_banded.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.linalg import solve_banded

BACKEND = "python"


def _chi_vec(s, chic, s0, s1, chi_const):
    tau = np.clip((s - s0) / (s1 - s0), 0.0, 1.0)
    return np.where(s < s0, s, np.where(s >= s1, chi_const, P.polyval(tau, chic)))


def _chi_dot_vec(s, dchic, s0, s1):
    tau = np.clip((s - s0) / (s1 - s0), 0.0, 1.0)
    mid = P.polyval(tau, dchic) / (s1 - s0)
    return np.where(s < s0, 1.0, np.where(s >= s1, 0.0, mid))


def _chi_dot_scalar(s, dchic, s0, s1):
    if s < s0:
        return 1.0
    if s >= s1:
        return 0.0
    return float(P.polyval((s - s0) / (s1 - s0), dchic)) / (s1 - s0)


def _heat_defect(x, dt_sub, a, c, zc, ab):
    """Backward-Euler substep in defect form: solve (I - dt L) delta = dt L x
    and add delta.  States with L x = 0 are bitwise fixed points."""
    rhs = zc * x
    rhs[:-1] += c[:-1] * (x[1:] - x[:-1])
    rhs[1:] += a[1:] * (x[:-1] - x[1:])
    rhs *= dt_sub
    delta = solve_banded((1, 1), ab, rhs, check_finite=False)
    x += delta


def _penalty_newton(y, lam_t, dt, dchic, ddchic, s0, s1, tol):
    """Backward-Euler solve of dy/dt = -2 lam_t chi_dot((y-1)^2)(y-1) y for
    one node with (y-1)^2 >= s0 (so y > 1), Newton guarded by bisection."""
    two_ld = 2.0 * lam_t * dt

    def G(v):
        cd = _chi_dot_scalar((v - 1.0) ** 2, dchic, s0, s1)
        return v + two_ld * cd * (v - 1.0) * v - y

    lo, hi = 1.0, y
    v = y
    for _ in range(60):
        Gv = G(v)
        if abs(Gv) <= tol * max(1.0, abs(y)):
            return v
        if Gv > 0:
            hi = v
        else:
            lo = v
        s = (v - 1.0) ** 2
        cd = _chi_dot_scalar(s, dchic, s0, s1)
        if s0 <= s < s1:
            cdd = float(P.polyval((s - s0) / (s1 - s0), ddchic)) / (s1 - s0) ** 2
        else:
            cdd = 0.0
        dG = 1.0 + two_ld * (2.0 * cdd * (v - 1.0) ** 2 * v + cd * (2.0 * v - 1.0))
        vn = v - Gv / dG if dG != 0.0 else math.nan
        v = vn if lo < vn < hi else 0.5 * (lo + hi)
    for _ in range(200):
        v = 0.5 * (lo + hi)
        Gv = G(v)
        if abs(Gv) <= tol * max(1.0, abs(y)) or hi - lo <= tol:
            return v
        if Gv > 0:
            hi = v
        else:
            lo = v
    return None


def _penalty_update(g, z, lam_t, dt, chic, dchic, ddchic, s0, s1, newton_tol):
    """Exact pointwise penalty substep: direction preserved, modulus squared
    follows the logistic closed form wherever chi_dot = 1."""
    y = g * g + z * z
    s = (y - 1.0) ** 2
    e1 = math.exp(-2.0 * lam_t * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        yn_log = y / (y + (1.0 - y) * e1)
    active = (y > 0.0) & (s < s1)
    yn = np.where(active & (s < s0), yn_log, y)
    for i in np.nonzero(active & (s >= s0))[0]:
        v = _penalty_newton(float(y[i]), lam_t, dt, dchic, ddchic, s0, s1, newton_tol)
        if v is None:
            return False
        yn[i] = v
    changed = active & (yn != y)
    fac = np.ones_like(y)
    fac[changed] = np.sqrt(yn[changed] / y[changed])
    g *= fac
    z *= fac
    return True


def _build_banded(dt_sub, a, c, zc, react=None):
    n1 = a.shape[0]
    ab = np.zeros((3, n1))
    ab[1] = 1.0 + dt_sub * (a + c) - dt_sub * zc
    if react is not None:
        ab[1] += dt_sub * react
    ab[0, 1:] = -dt_sub * c[:-1]
    ab[2, :-1] = -dt_sub * a[1:]
    return ab


def _m_matrix_ok(ab) -> bool:
    """Thomas pivots of the banded system must stay strictly positive (the
    backward-Euler matrix is an M-matrix by construction); mirrors the
    compiled kernel's factorization check."""
    beta = ab[1, 0]
    if beta <= 0.0:
        return False
    for i in range(ab.shape[1] - 1):
        beta = ab[1, i + 1] - ab[2, i] * ab[0, i + 1] / beta
        if beta <= 0.0:
            return False
    return True


def _imex_step(x, dt, a, c, zc, react):
    """Backward Euler with the frozen reaction coefficient on the diagonal,
    defect form: (I - dt L + dt R) delta = dt (L x - R x).  Returns False
    when the matrix loses the M-matrix property (dt too large)."""
    ab = _build_banded(dt, a, c, zc, react)
    if not _m_matrix_ok(ab):
        return False
    rhs = (zc - react) * x
    rhs[:-1] += c[:-1] * (x[1:] - x[:-1])
    rhs[1:] += a[1:] * (x[:-1] - x[1:])
    rhs *= dt
    delta = solve_banded((1, 1), ab, rhs, check_finite=False)
    x += delta
    return True


def advance(g, z, step0, nsteps, dt, scheme_id, loglam, chic, s0, s1,
            a_g, c_g, zc_g, a_z, c_z, zc_z, w, newton_tol, accum):
    """Advance nsteps full steps in place; accum = [kinetic, dissipation,
    penalty-integral, errcode] is updated per step in a fixed order.
    Returns -1 on success, else the global index of the failing step."""
    dchic = P.polyder(chic)
    ddchic = P.polyder(dchic)
    chi_const = float(P.polyval(1.0, chic))
    if scheme_id == 0:
        ab_g = _build_banded(0.5 * dt, a_g, c_g, zc_g)
        ab_z = _build_banded(0.5 * dt, a_z, c_z, zc_z)
        if not (_m_matrix_ok(ab_g) and _m_matrix_ok(ab_z)):
            accum[3] = 2.0
            return step0
    old_g = np.empty_like(g)
    old_z = np.empty_like(z)
    for j in range(nsteps):
        t = (step0 + j) * dt
        kapdot = 1.0 / (math.pi * (1.0 + t * t))
        lam_t = math.exp((1.0 - math.atan(t) / math.pi) * loglam)
        y = g * g + z * z
        qchi = float(np.dot(w, _chi_vec((y - 1.0) ** 2, chic, s0, s1, chi_const)))
        accum[1] += dt * 0.25 * loglam * kapdot * lam_t * qchi
        accum[2] += dt * lam_t * qchi
        old_g[:] = g
        old_z[:] = z
        if scheme_id == 0:
            _heat_defect(g, 0.5 * dt, a_g, c_g, zc_g, ab_g)
            _heat_defect(z, 0.5 * dt, a_z, c_z, zc_z, ab_z)
            if not _penalty_update(g, z, lam_t, dt, chic, dchic, ddchic, s0, s1, newton_tol):
                accum[3] = 2.0
                return step0 + j
            _heat_defect(g, 0.5 * dt, a_g, c_g, zc_g, ab_g)
            _heat_defect(z, 0.5 * dt, a_z, c_z, zc_z, ab_z)
        else:
            react = lam_t * _chi_dot_vec((y - 1.0) ** 2, dchic, s0, s1) * (y - 1.0)
            react[0] = 0.0  # g-row 0 is Dirichlet; zeta-row reaction set below
            react[-1] = 0.0
            react_z = react.copy()
            react_z[0] = lam_t * _chi_dot_scalar((y[0] - 1.0) ** 2, dchic, s0, s1) * (y[0] - 1.0)
            if not (_imex_step(g, dt, a_g, c_g, zc_g, react)
                    and _imex_step(z, dt, a_z, c_z, zc_z, react_z)):
                accum[3] = 2.0
                return step0 + j
        dg = g - old_g
        dz = z - old_z
        ksum = float(np.dot(w, dg * dg + dz * dz))
        if not math.isfinite(ksum):
            accum[3] = 1.0
            return step0 + j
        accum[0] += ksum / dt
    return -1

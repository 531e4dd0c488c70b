# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping core.

Same contract as `fallback.advance`: strang or imex steps in place, running
accumulators updated once per step (grouping steps into checkpoint blocks
cannot change the totals bit for bit).  The half-step matrices are
prefactored Thomas sweeps; the block loop runs without the GIL so sweep
members can integrate on real threads.
"""

import numpy as np

from libc.math cimport atan, exp, fabs, isfinite, sqrt, M_PI

BACKEND = "compiled"


cdef inline double _polyval(const double* c, int nc, double x) noexcept nogil:
    cdef double acc = c[nc - 1]
    cdef int k
    for k in range(nc - 2, -1, -1):
        acc = acc * x + c[k]
    return acc


cdef inline double _chi(const double* c, double s0, double inv_len, double chi_const, double s) noexcept nogil:
    if s < s0:
        return s
    cdef double tau = (s - s0) * inv_len
    if tau >= 1.0:
        return chi_const
    return _polyval(c, 6, tau)


cdef inline double _chi_dot(const double* dc, double s0, double inv_len, double s) noexcept nogil:
    if s < s0:
        return 1.0
    cdef double tau = (s - s0) * inv_len
    if tau >= 1.0:
        return 0.0
    return _polyval(dc, 5, tau) * inv_len


cdef inline double _chi_ddot(const double* ddc, double s0, double inv_len, double s) noexcept nogil:
    if s < s0:
        return 0.0
    cdef double tau = (s - s0) * inv_len
    if tau >= 1.0:
        return 0.0
    return _polyval(ddc, 4, tau) * inv_len * inv_len


cdef int _factor(int m, const double* sub, const double* dia, const double* sup,
                 double* beta, double* gam) noexcept nogil:
    """LU of the tridiagonal backward-Euler matrix; fails (returns 1) when a
    pivot is not strictly positive (the matrix is an M-matrix by design)."""
    cdef int i
    beta[0] = dia[0]
    if beta[0] <= 0.0:
        return 1
    for i in range(m - 1):
        gam[i] = sup[i] / beta[i]
        beta[i + 1] = dia[i + 1] - sub[i + 1] * gam[i]
        if beta[i + 1] <= 0.0:
            return 1
    return 0


cdef void _solve_add(int m, double* x, const double* sub, const double* beta,
                     const double* gam, double* rhs, double* tmp) noexcept nogil:
    """Thomas sweeps for A delta = rhs (rhs is clobbered); x += delta."""
    cdef int i
    tmp[0] = rhs[0] / beta[0]
    for i in range(1, m):
        tmp[i] = (rhs[i] - sub[i] * tmp[i - 1]) / beta[i]
    rhs[m - 1] = tmp[m - 1]
    for i in range(m - 2, -1, -1):
        rhs[i] = tmp[i] - gam[i] * rhs[i + 1]
    for i in range(m):
        x[i] += rhs[i]


cdef void _heat_defect(int m, double* x, double dt_sub,
                       const double* a, const double* c, const double* zc,
                       const double* sub, const double* beta, const double* gam,
                       double* rhs, double* tmp) noexcept nogil:
    """Backward-Euler substep in defect form: (I - dt L) delta = dt L x,
    then x += delta.  States with L x = 0 are bitwise fixed points."""
    cdef int i
    rhs[0] = dt_sub * (c[0] * (x[1] - x[0]) + zc[0] * x[0])
    for i in range(1, m - 1):
        rhs[i] = dt_sub * (a[i] * (x[i - 1] - x[i]) + c[i] * (x[i + 1] - x[i]) + zc[i] * x[i])
    rhs[m - 1] = 0.0
    _solve_add(m, x, sub, beta, gam, rhs, tmp)


cdef double _penalty_newton(double y, double two_ld,
                            const double* dchic, const double* ddchic,
                            double s0, double inv_len, double tol) noexcept nogil:
    """Backward-Euler update of the squared modulus for one node with
    (y-1)^2 >= s0 (hence y > 1): Newton guarded by bisection.
    Returns -1.0 on failure."""
    cdef double lo = 1.0, hi = y, v = y
    cdef double Gv, s, cd, cdd, dG, vn
    cdef double scale = y if y > 1.0 else 1.0
    cdef int it
    for it in range(60):
        s = (v - 1.0) * (v - 1.0)
        cd = _chi_dot(dchic, s0, inv_len, s)
        Gv = v + two_ld * cd * (v - 1.0) * v - y
        if fabs(Gv) <= tol * scale:
            return v
        if Gv > 0.0:
            hi = v
        else:
            lo = v
        cdd = _chi_ddot(ddchic, s0, inv_len, s)
        dG = 1.0 + two_ld * (2.0 * cdd * s * v + cd * (2.0 * v - 1.0))
        if dG != 0.0:
            vn = v - Gv / dG
            if lo < vn < hi:
                v = vn
                continue
        v = 0.5 * (lo + hi)
    for it in range(200):
        v = 0.5 * (lo + hi)
        s = (v - 1.0) * (v - 1.0)
        Gv = v + two_ld * _chi_dot(dchic, s0, inv_len, s) * (v - 1.0) * v - y
        if fabs(Gv) <= tol * scale or hi - lo <= tol:
            return v
        if Gv > 0.0:
            hi = v
        else:
            lo = v
    return -1.0


def advance(double[::1] g, double[::1] z, long step0, long nsteps, double dt,
            int scheme_id, double loglam, object chic_obj, double s0, double s1,
            const double[::1] a_g, const double[::1] c_g, const double[::1] zc_g,
            const double[::1] a_z, const double[::1] c_z, const double[::1] zc_z,
            const double[::1] w, double newton_tol, double[::1] accum):
    """Advance nsteps full steps; returns -1 on success or the failing global
    step index (accum[3]: 1 = non-finite state, 2 = factor/penalty failure)."""
    cdef int m = g.shape[0]
    chic_arr = np.ascontiguousarray(chic_obj, dtype=np.float64)
    cdef double[::1] chic = chic_arr
    cdef double[::1] dchic = np.ascontiguousarray(np.polynomial.polynomial.polyder(chic_arr))
    cdef double[::1] ddchic = np.ascontiguousarray(
        np.polynomial.polynomial.polyder(np.polynomial.polynomial.polyder(chic_arr)))
    cdef double chi_const = _polyval(&chic[0], 6, 1.0)
    cdef double inv_len = 1.0 / (s1 - s0)

    scratch = np.zeros((13, m), dtype=np.float64)
    cdef double[:, ::1] S = scratch
    cdef double* old_g = &S[0, 0]
    cdef double* old_z = &S[1, 0]
    cdef double* rhs = &S[2, 0]
    cdef double* tmp = &S[3, 0]
    cdef double* sub_g = &S[4, 0]
    cdef double* beta_g = &S[5, 0]
    cdef double* gam_g = &S[6, 0]
    cdef double* sub_z = &S[7, 0]
    cdef double* beta_z = &S[8, 0]
    cdef double* gam_z = &S[9, 0]
    cdef double* dia = &S[10, 0]
    cdef double* sup = &S[11, 0]
    cdef double* react = &S[12, 0]

    cdef double* gp = &g[0]
    cdef double* zp = &z[0]
    cdef const double* ag = &a_g[0]
    cdef const double* cg = &c_g[0]
    cdef const double* zg = &zc_g[0]
    cdef const double* az = &a_z[0]
    cdef const double* cz = &c_z[0]
    cdef const double* zz = &zc_z[0]
    cdef const double* wp = &w[0]
    cdef double* acc = &accum[0]
    cdef const double* chp = &chic[0]
    cdef const double* dchp = &dchic[0]
    cdef const double* ddchp = &ddchic[0]

    cdef double dth = 0.5 * dt
    cdef long j
    cdef long fail_step = -1
    cdef int i
    cdef int bad = 0
    cdef double t, kapdot, lam_t, qchi, y, s, e1, yn, den, fac, ksum, dg, dz, two_ld

    if scheme_id == 0:
        for i in range(m):
            dia[i] = 1.0 + dth * (ag[i] + cg[i]) - dth * zg[i]
            sub_g[i] = -dth * ag[i]
            sup[i] = -dth * cg[i]
        bad |= _factor(m, sub_g, dia, sup, beta_g, gam_g)
        for i in range(m):
            dia[i] = 1.0 + dth * (az[i] + cz[i]) - dth * zz[i]
            sub_z[i] = -dth * az[i]
            sup[i] = -dth * cz[i]
        bad |= _factor(m, sub_z, dia, sup, beta_z, gam_z)
        if bad:
            accum[3] = 2.0
            return step0

    with nogil:
        for j in range(nsteps):
            t = (step0 + j) * dt
            kapdot = 1.0 / (M_PI * (1.0 + t * t))
            lam_t = exp((1.0 - atan(t) / M_PI) * loglam)
            qchi = 0.0
            for i in range(m):
                y = gp[i] * gp[i] + zp[i] * zp[i]
                s = (y - 1.0) * (y - 1.0)
                qchi += wp[i] * _chi(chp, s0, inv_len, chi_const, s)
            acc[1] += dt * 0.25 * loglam * kapdot * lam_t * qchi
            acc[2] += dt * lam_t * qchi
            for i in range(m):
                old_g[i] = gp[i]
                old_z[i] = zp[i]

            if scheme_id == 0:
                _heat_defect(m, gp, dth, ag, cg, zg, sub_g, beta_g, gam_g, rhs, tmp)
                _heat_defect(m, zp, dth, az, cz, zz, sub_z, beta_z, gam_z, rhs, tmp)
                e1 = exp(-2.0 * lam_t * dt)
                two_ld = 2.0 * lam_t * dt
                for i in range(m):
                    y = gp[i] * gp[i] + zp[i] * zp[i]
                    if y == 0.0:
                        continue
                    s = (y - 1.0) * (y - 1.0)
                    if s < s0:
                        den = y + (1.0 - y) * e1
                        yn = y / den
                    elif s >= s1:
                        continue
                    else:
                        yn = _penalty_newton(y, two_ld, dchp, ddchp, s0, inv_len, newton_tol)
                        if yn < 0.0:
                            acc[3] = 2.0
                            fail_step = step0 + j
                            break
                    if yn == y:
                        continue
                    fac = sqrt(yn / y)
                    gp[i] *= fac
                    zp[i] *= fac
                if fail_step >= 0:
                    break
                _heat_defect(m, gp, dth, ag, cg, zg, sub_g, beta_g, gam_g, rhs, tmp)
                _heat_defect(m, zp, dth, az, cz, zz, sub_z, beta_z, gam_z, rhs, tmp)
            else:
                # imex: reaction frozen from the previous slice on the diagonal
                for i in range(m):
                    y = old_g[i] * old_g[i] + old_z[i] * old_z[i]
                    s = (y - 1.0) * (y - 1.0)
                    react[i] = lam_t * _chi_dot(dchp, s0, inv_len, s) * (y - 1.0)
                react[m - 1] = 0.0
                for i in range(m):
                    dia[i] = 1.0 + dt * (ag[i] + cg[i]) - dt * zg[i] + (dt * react[i] if i > 0 else 0.0)
                    sub_g[i] = -dt * ag[i]
                    sup[i] = -dt * cg[i]
                if _factor(m, sub_g, dia, sup, beta_g, gam_g):
                    acc[3] = 2.0
                    fail_step = step0 + j
                    break
                rhs[0] = 0.0
                for i in range(1, m - 1):
                    rhs[i] = dt * (ag[i] * (gp[i - 1] - gp[i]) + cg[i] * (gp[i + 1] - gp[i])
                                   + (zg[i] - react[i]) * gp[i])
                rhs[m - 1] = 0.0
                _solve_add(m, gp, sub_g, beta_g, gam_g, rhs, tmp)
                for i in range(m):
                    dia[i] = 1.0 + dt * (az[i] + cz[i]) - dt * zz[i] + dt * react[i]
                    sub_z[i] = -dt * az[i]
                    sup[i] = -dt * cz[i]
                if _factor(m, sub_z, dia, sup, beta_z, gam_z):
                    acc[3] = 2.0
                    fail_step = step0 + j
                    break
                rhs[0] = dt * (cz[0] * (zp[1] - zp[0]) + (zz[0] - react[0]) * zp[0])
                for i in range(1, m - 1):
                    rhs[i] = dt * (az[i] * (zp[i - 1] - zp[i]) + cz[i] * (zp[i + 1] - zp[i])
                                   + (zz[i] - react[i]) * zp[i])
                rhs[m - 1] = 0.0
                _solve_add(m, zp, sub_z, beta_z, gam_z, rhs, tmp)

            ksum = 0.0
            for i in range(m):
                dg = gp[i] - old_g[i]
                dz = zp[i] - old_z[i]
                ksum += wp[i] * (dg * dg + dz * dz)
            if not isfinite(ksum):
                acc[3] = 1.0
                fail_step = step0 + j
                break
            acc[0] += ksum / dt

    return fail_step

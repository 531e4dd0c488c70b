"""Scalar machinery of the penalized flow.

The evolution relaxes the unit-sphere constraint with a force

    lambda^(1-kappa(t)) * chi_dot((|u|^2-1)^2) * (|u|^2-1) * u,

where kappa(t) = arctan(t)/pi grows the effective exponent away from 1 as
time passes, and chi is a smooth cutoff that is the identity below 2 and
saturates at 3 above 4.  Everything here is pure and stateless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# (s, value, first derivative, second derivative) at both ends of the
# transition interval of chi.  Identity to the left, constant to the right.
DEFAULT_CHI_KNOTS = ((2.0, 2.0, 1.0, 0.0), (4.0, 3.0, 0.0, 0.0))


def hermite_quintic_coeffs(knots=DEFAULT_CHI_KNOTS) -> np.ndarray:
    """Coefficients (ascending, in tau = (s-s0)/(s1-s0)) of the quintic
    matching value / first / second derivative at both knots."""
    (s0, v0, d1a, d2a), (s1, v1, d1b, d2b) = knots
    L = s1 - s0
    if L <= 0:
        raise ValueError("chi knots must be increasing in s")
    A = np.zeros((6, 6))
    rhs = np.array([v0, L * d1a, L * L * d2a, v1, L * d1b, L * L * d2b])
    A[0, 0] = 1.0
    A[1, 1] = 1.0
    A[2, 2] = 2.0
    A[3] = 1.0
    A[4] = np.arange(6)
    A[5] = np.arange(6) * (np.arange(6) - 1)
    return np.linalg.solve(A, rhs)


_DEFAULT_COEFFS = hermite_quintic_coeffs()


def kappa(t):
    """Exponent schedule arctan(t)/pi on t >= 0; values in [0, 1/2)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("kappa requires t >= 0")
    out = np.arctan(t) / math.pi
    return float(out) if out.ndim == 0 else out


def kappa_dot(t):
    """d/dt of the exponent schedule: 1/(pi (1 + t^2))."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("kappa_dot requires t >= 0")
    out = 1.0 / (math.pi * (1.0 + t * t))
    return float(out) if out.ndim == 0 else out


def _eval_quintic(tau, coeffs, deriv=0):
    c = np.polynomial.polynomial.polyder(coeffs, deriv) if deriv else coeffs
    return np.polynomial.polynomial.polyval(tau, c)


def chi(s, knots=DEFAULT_CHI_KNOTS):
    """Cutoff: identity below the first knot, constant above the second,
    quintic Hermite in between (monotone, <= the right-knot value)."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("chi is defined on s >= 0")
    coeffs = _DEFAULT_COEFFS if knots is DEFAULT_CHI_KNOTS else hermite_quintic_coeffs(knots)
    s0, s1 = knots[0][0], knots[1][0]
    tau = np.clip((s - s0) / (s1 - s0), 0.0, 1.0)
    mid = _eval_quintic(tau, coeffs)
    out = np.where(s < s0, s, np.where(s >= s1, knots[1][1], mid))
    return float(out) if out.ndim == 0 else out


def chi_dot(s, knots=DEFAULT_CHI_KNOTS):
    """Derivative of chi: 1 below the first knot, 0 above the second."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("chi_dot is defined on s >= 0")
    coeffs = _DEFAULT_COEFFS if knots is DEFAULT_CHI_KNOTS else hermite_quintic_coeffs(knots)
    s0, s1 = knots[0][0], knots[1][0]
    L = s1 - s0
    tau = np.clip((s - s0) / L, 0.0, 1.0)
    mid = _eval_quintic(tau, coeffs, deriv=1) / L
    out = np.where(s < s0, 1.0, np.where(s >= s1, 0.0, mid))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SchemeParams:
    """Knobs of the penalized scheme.

    lam   : penalty strength, > 1 (log lam divides the decay bound)
    T     : time horizon (T = 0 permitted: a run is then the initial slice)
    d     : spatial dimension of the ball, >= 2; the decay diagnostics
            additionally require d >= 3 and check it themselves
    chi_knots : endpoint data of the cutoff's transition interval
    """

    lam: float
    T: float
    d: int
    chi_knots: tuple = DEFAULT_CHI_KNOTS

    def __post_init__(self):
        if not self.lam > 1.0:
            raise ValueError(f"lambda must exceed 1 (got {self.lam})")
        if self.T < 0:
            raise ValueError(f"T must be nonnegative (got {self.T})")
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"dimension d must be an integer >= 2 (got {self.d})")
        object.__setattr__(self, "d", int(self.d))

    @property
    def log_lam(self) -> float:
        return math.log(self.lam)

    def chi_coeffs(self) -> np.ndarray:
        """Quintic coefficients of the transition piece, for the kernels."""
        if self.chi_knots is DEFAULT_CHI_KNOTS or self.chi_knots == DEFAULT_CHI_KNOTS:
            return _DEFAULT_COEFFS.copy()
        return hermite_quintic_coeffs(self.chi_knots)


def penalty_coefficient(p: SchemeParams, t: float) -> float:
    """Time-dependent penalty weight lambda^(1 - kappa(t)).

    Nonincreasing in t; always in (sqrt(lambda), lambda] since kappa < 1/2.
    """
    slack = 1e-12 * max(1.0, p.T)
    if t < -slack or t > p.T + slack:
        raise ValueError(f"t={t} outside the scheme horizon [0, {p.T}]")
    t = min(max(t, 0.0), p.T) if p.T > 0 else 0.0
    if t == 0.0:
        return p.lam
    return math.exp((1.0 - kappa(t)) * p.log_lam)


def penalty_force(u, p: SchemeParams, t: float):
    """Pointwise penalty term lam^(1-kappa) chi_dot((|u|^2-1)^2) (|u|^2-1) u.

    Parallel to u at every point; vanishes exactly at |u| in {0, 1}.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("penalty_force requires finite u")
    y = float(np.dot(u, u))
    coeff = penalty_coefficient(p, t) * chi_dot((y - 1.0) ** 2, p.chi_knots) * (y - 1.0)
    return coeff * u

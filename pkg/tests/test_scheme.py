import math

import mpmath
import numpy as np
import pytest

from glheat.scheme import (
    DEFAULT_CHI_KNOTS,
    SchemeParams,
    chi,
    chi_dot,
    hermite_quintic_coeffs,
    kappa,
    kappa_dot,
    penalty_coefficient,
    penalty_force,
)


class TestKappa:
    def test_at_zero(self):
        assert kappa(0.0) == 0.0

    def test_at_one(self):
        assert kappa(1.0) == pytest.approx(0.25, abs=1e-15)

    def test_large_argument_approaches_half(self):
        # high-precision arctangent oracle
        oracle = float(mpmath.atan(mpmath.mpf(10) ** 6) / mpmath.pi)
        val = kappa(1e6)
        assert val < 0.5
        assert abs(val - 0.5) < 1e-6
        assert val == pytest.approx(oracle, abs=1e-14)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            kappa(-0.1)

    def test_monotone_and_bounded(self):
        t = np.linspace(0.0, 50.0, 4001)
        k = kappa(t)
        assert np.all(np.diff(k) > 0)
        assert np.all(k >= 0.0)
        assert np.all(k < 0.5)

    def test_kappa_dot_matches_difference_quotient(self):
        for t in (0.0, 0.3, 2.0, 9.0):
            h = 1e-6
            fd = (kappa(t + h) - kappa(max(t - h, 0.0))) / (h + min(t, h))
            assert kappa_dot(t) == pytest.approx(fd, rel=1e-5)


class TestChi:
    def test_identity_branch(self):
        assert chi(1.0) == 1.0
        assert chi(0.0) == 0.0

    def test_constant_branch(self):
        assert chi(5.0) == 3.0
        assert chi(4.0) == 3.0

    def test_midpoint_value(self):
        # quintic Hermite with knots ((2,2,1,0),(4,3,0,0)) evaluated at s=3:
        # tau coefficients are (2, 2, 0, -2, 1, 0), so p(1/2) = 45/16
        assert chi(3.0) == pytest.approx(45.0 / 16.0, abs=1e-14)

    def test_quintic_coefficients(self):
        np.testing.assert_allclose(
            hermite_quintic_coeffs(), [2.0, 2.0, 0.0, -2.0, 1.0, 0.0], atol=1e-12
        )

    def test_chi_dot_midpoint_against_finite_difference(self):
        assert chi_dot(3.0) == pytest.approx(0.5, abs=1e-14)
        h = 1e-6
        fd = (chi(3.0 + h) - chi(3.0 - h)) / (2 * h)
        assert chi_dot(3.0) == pytest.approx(fd, rel=1e-8)

    @pytest.mark.parametrize("s_join, inner", [(2.0, 1.0), (4.0, 0.0)])
    def test_c1_across_joins(self, s_join, inner):
        for h in (1e-3, 1e-4, 1e-5):
            fd = (chi(s_join + h) - chi(s_join - h)) / (2 * h)
            assert fd == pytest.approx(chi_dot(s_join), abs=20 * h)
        assert chi_dot(s_join + 1e-12) == pytest.approx(chi_dot(s_join - 1e-12), abs=1e-8)

    def test_bounded_and_nondecreasing(self):
        s = np.linspace(0.0, 10.0, 5001)
        v = chi(s)
        assert np.all(v <= 3.0 + 1e-15)
        assert np.all(np.diff(v) >= -1e-15)
        assert np.all(chi_dot(s) >= -1e-15)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            chi(-1.0)


class TestSchemeParams:
    def test_lambda_must_exceed_one(self):
        with pytest.raises(ValueError):
            SchemeParams(1.0, 1.0, 3)

    def test_dimension_floor(self):
        with pytest.raises(ValueError):
            SchemeParams(10.0, 1.0, 1)

    def test_negative_horizon_rejected(self):
        with pytest.raises(ValueError):
            SchemeParams(10.0, -1.0, 3)

    def test_zero_horizon_allowed(self):
        assert SchemeParams(10.0, 0.0, 3).T == 0.0


class TestPenaltyCoefficient:
    def test_at_zero(self):
        assert penalty_coefficient(SchemeParams(100.0, 1.0, 3), 0.0) == pytest.approx(100.0)

    def test_kappa_quarter(self):
        # kappa(1) = 1/4 exactly, so the coefficient is 100^(3/4)
        p = SchemeParams(100.0, 2.0, 3)
        assert penalty_coefficient(p, 1.0) == pytest.approx(100.0 ** 0.75, rel=1e-14)

    def test_limit_as_lambda_to_one(self):
        p = SchemeParams(1.0 + 1e-12, 1.0, 3)
        assert penalty_coefficient(p, 0.5) == pytest.approx(1.0, abs=1e-11)

    def test_range_and_monotonicity(self):
        p = SchemeParams(1e4, 5.0, 3)
        ts = np.linspace(0, 5.0, 101)
        vals = [penalty_coefficient(p, t) for t in ts]
        assert all(math.sqrt(p.lam) < v <= p.lam for v in vals)
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_out_of_horizon_rejected(self):
        p = SchemeParams(10.0, 1.0, 3)
        with pytest.raises(ValueError):
            penalty_coefficient(p, 1.5)
        with pytest.raises(ValueError):
            penalty_coefficient(p, -0.5)


class TestPenaltyForce:
    def test_unit_modulus_gives_zero(self):
        p = SchemeParams(50.0, 1.0, 3)
        u = np.array([0.6, 0.8, 0.0])
        np.testing.assert_array_equal(penalty_force(u, p, 0.3), np.zeros(3))

    def test_zero_vector_fixed(self):
        p = SchemeParams(50.0, 1.0, 3)
        np.testing.assert_array_equal(penalty_force(np.zeros(4), p, 0.0), np.zeros(4))

    def test_direct_substitution(self):
        # |u|^2 = 0.25, (|u|^2-1)^2 = 0.5625 < 2 so chi_dot = 1
        p = SchemeParams(2.0, 1.0, 3)
        f = penalty_force(np.array([0.5, 0.0, 0.0]), p, 0.0)
        np.testing.assert_allclose(f, [-0.75, 0.0, 0.0], atol=1e-15)

    def test_parallel_to_u(self):
        rng = np.random.default_rng(7)
        p = SchemeParams(30.0, 1.0, 4)
        for _ in range(50):
            u = rng.normal(size=5)
            f = penalty_force(u, p, 0.2)
            # all 2x2 cross minors vanish: f is a multiple of u
            for i in range(5):
                for j in range(i + 1, 5):
                    assert abs(f[i] * u[j] - f[j] * u[i]) <= 1e-12 * (1 + np.dot(u, u)) ** 2

    def test_pushes_modulus_up_from_below(self):
        # for |u| <= 1 the inner product <force, u> = Lam chi_dot (y-1) y <= 0,
        # i.e. du/dt = -force increases the modulus toward 1
        rng = np.random.default_rng(11)
        p = SchemeParams(30.0, 1.0, 3)
        for _ in range(50):
            u = rng.normal(size=4)
            u = u / np.linalg.norm(u) * rng.uniform(0, 1)
            assert np.dot(penalty_force(u, p, 0.0), u) <= 1e-15

    def test_nonfinite_rejected(self):
        p = SchemeParams(2.0, 1.0, 3)
        with pytest.raises(ValueError):
            penalty_force(np.array([np.nan, 0.0]), p, 0.0)

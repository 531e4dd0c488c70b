import math

import numpy as np
import pytest
from scipy import integrate

from glheat import probes as pr
from glheat.errors import ContainmentError, NumericsError
from glheat.grid import InitialDatum, RadialGrid
from glheat.scheme import SchemeParams
from glheat.solver import StepperConfig, Trajectory, run


def frozen_trajectory(grid, p, times, g_of_rt, z_of_rt):
    """Hand-built trajectory with prescribed slices (no integration)."""
    K = len(times)
    G = np.array([g_of_rt(grid.r, t) for t in times])
    Z = np.array([z_of_rt(grid.r, t) for t in times])
    zeros = np.zeros(K)
    return Trajectory(p, grid, StepperConfig(dt=times[1] - times[0]),
                      np.asarray(times, dtype=float), G, Z, zeros, zeros.copy(), zeros.copy())


@pytest.fixture(scope="module")
def equator_run():
    grid = RadialGrid(256, 3)
    p = SchemeParams(1e4, 0.05, 3)
    return run(p, grid, StepperConfig(dt=2e-5, checkpoint_stride=2), InitialDatum.equator())


class TestWeightedIntegral:
    def test_constant_density_against_quadrature_oracle(self):
        # (1/R^d) int_{t0-4R^2}^{t0-R^2} dt int_B c exp(-r^2/(4(t0-t)))
        grid = RadialGrid(512, 3)
        p = SchemeParams(10.0, 1.0, 3)
        times = np.linspace(0.0, 0.2, 401)
        c = 1.7
        dens = np.full((len(times), grid.n + 1), c)
        t0, R = 0.1, 0.1
        got = pr.weighted_density_integral(grid, times, dens, t0, 0.0, R)

        oracle, _ = integrate.dblquad(
            lambda r, t: c * 4 * math.pi * r * r * math.exp(-r * r / (4 * (t0 - t))),
            t0 - 4 * R * R, t0 - R * R, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12)
        assert got == pytest.approx(oracle, rel=1e-4)

    def test_linear_in_density(self):
        grid = RadialGrid(128, 3)
        times = np.linspace(0.0, 0.2, 101)
        rng = np.random.default_rng(2)
        dens = rng.uniform(0.0, 1.0, (len(times), grid.n + 1))
        one = pr.weighted_density_integral(grid, times, dens, 0.1, 0.0, 0.05)
        two = pr.weighted_density_integral(grid, times, 2.0 * dens, 0.1, 0.0, 0.05)
        assert two == pytest.approx(2.0 * one, rel=1e-13)

    def test_offcenter_weight_against_direct_average(self):
        # the closed-form shell average of the off-center Gaussian matches an
        # adaptive angular quadrature
        grid = RadialGrid(64, 3)
        rho0, tmt0 = 0.35, -0.004
        w = pr._gauss_weight(grid, rho0, tmt0)
        for i in (1, 10, 30, 64):
            r = grid.r[i]
            direct, _ = integrate.quad(
                lambda mu: math.exp((r * r + rho0 * rho0 - 2 * r * rho0 * mu) / (4 * tmt0)) / 2.0,
                -1.0, 1.0, epsabs=1e-14, epsrel=1e-12)
            assert w[i] == pytest.approx(direct, rel=1e-9)

    def test_weight_bounds(self):
        grid = RadialGrid(64, 3)
        for rho0 in (0.0, 0.4):
            w = pr._gauss_weight(grid, rho0, -0.01)
            assert np.all(w > 0.0)
            assert np.all(w <= 1.0 + 1e-15)


class TestScaledEnergy:
    def test_zero_density(self):
        grid = RadialGrid(128, 3)
        p = SchemeParams(10.0, 1.0, 3)
        traj = frozen_trajectory(grid, p, np.linspace(0, 0.5, 2001),
                                 lambda r, t: np.zeros_like(r),
                                 lambda r, t: np.ones_like(r))
        cyl = pr.ParabolicCylinder(0.3, 0.0, 0.1)
        assert pr.scaled_energy(traj, cyl, 0.1) == 0.0

    def test_containment_error_names_condition(self, equator_run):
        cyl = pr.ParabolicCylinder(0.025, 0.0, 0.1)
        with pytest.raises(ContainmentError, match=r"t0 - \(2R\)\^2 > 0"):
            pr.scaled_energy(equator_run, cyl, 0.1)

    def test_stride_rule_enforced(self, equator_run):
        cyl = pr.ParabolicCylinder(0.025, 0.0, 0.01)
        with pytest.raises(ContainmentError, match="R\\^2/8"):
            pr.scaled_energy(equator_run, cyl, 0.01)


class TestFlowDefect:
    def test_stationary_field_zero(self):
        grid = RadialGrid(128, 3)
        p = SchemeParams(10.0, 1.0, 3)
        traj = frozen_trajectory(grid, p, np.linspace(0, 0.5, 2001),
                                 lambda r, t: np.zeros_like(r),
                                 lambda r, t: np.full_like(r, 0.7))
        cyl = pr.ParabolicCylinder(0.3, 0.0, 0.05)
        assert pr.flow_defect(traj, cyl, 0.05, 0.1) == pytest.approx(0.0, abs=1e-18)

    def test_self_similar_profile_annihilated(self):
        # zeta(t, r) = Z(r / sqrt(t0 - t)) satisfies D_t u + r u_r/(2(t-t0)) = 0
        grid = RadialGrid(256, 3)
        p = SchemeParams(10.0, 1.0, 3)
        t0 = 0.41

        def zprof(r, t):
            xi = r / math.sqrt(t0 - t)
            return 0.2 * np.exp(-xi * xi)

        times = np.linspace(0.0, 0.409, 1601)
        traj = frozen_trajectory(grid, p, times, lambda r, t: np.zeros_like(r), zprof)
        cyl = pr.ParabolicCylinder(t0, 0.0, 0.05)
        defect = pr.flow_defect(traj, cyl, 0.05, 0.1)
        # comparator: same profile frozen in time (not self-similar)
        frozen = frozen_trajectory(grid, p, times, lambda r, t: np.zeros_like(r),
                                   lambda r, t: zprof(r, 0.0))
        comparator = pr.flow_defect(frozen, cyl, 0.05, 0.1)
        assert defect >= 0.0
        assert defect < 1e-4 * comparator

    def test_off_axis_rejected(self, equator_run):
        cyl = pr.ParabolicCylinder(0.03, 0.2, 0.02)
        with pytest.raises(ContainmentError, match="on-axis"):
            pr.flow_defect(equator_run, cyl, 0.02, 0.03)


class TestMonotonicity:
    def test_constant_datum_all_zero(self):
        grid = RadialGrid(128, 3)
        p = SchemeParams(1e3, 0.06, 3)
        traj = run(p, grid, StepperConfig(dt=5e-5, checkpoint_stride=1), InitialDatum.constant())
        rep = pr.monotonicity_ladder(traj, (0.03, 0.0), [0.02, 0.04, 0.06])
        assert all(E == 0.0 for E in rep.energies)
        assert rep.fitted_cm == 0.0
        assert np.all(rep.defects >= 0.0)

    def test_equator_ladder_quasi_monotone(self, equator_run):
        rep = pr.monotonicity_ladder(equator_run, (0.025, 0.0), [0.02, 0.03, 0.04])
        assert np.all(rep.defects >= 0.0)
        assert rep.fitted_cm >= 0.0
        assert np.all(np.diff(rep.adjusted()) >= -1e-10)

    def test_ladder_must_increase(self, equator_run):
        with pytest.raises(ValueError, match="increasing"):
            pr.monotonicity_ladder(equator_run, (0.025, 0.0), [0.04, 0.02])


class TestLocalEnergy:
    def test_constant_datum_sentinel(self):
        grid = RadialGrid(128, 3)
        p = SchemeParams(1e3, 0.06, 3)
        traj = run(p, grid, StepperConfig(dt=5e-5, checkpoint_stride=1), InitialDatum.constant())
        lhs, rhs, C = pr.local_energy_ratio(traj, pr.ParabolicCylinder(0.03, 0.0, 0.05))
        assert (lhs, rhs) == (0.0, 0.0)
        assert math.isnan(C)

    def test_equator_ratio_stable_under_refinement(self):
        p = SchemeParams(1e4, 0.05, 3)
        cyl = pr.ParabolicCylinder(0.025, 0.0, 0.03)
        Cs = []
        for n in (256, 512):
            grid = RadialGrid(n, 3)
            traj = run(p, grid, StepperConfig(dt=2e-5, checkpoint_stride=2), InitialDatum.equator())
            Cs.append(pr.local_energy_ratio(traj, cyl)[2])
        assert 0.5 <= Cs[0] / Cs[1] <= 2.0

    def test_doubling_R_bounded_change(self, equator_run):
        c1 = pr.local_energy_ratio(equator_run, pr.ParabolicCylinder(0.025, 0.0, 0.02))[2]
        c2 = pr.local_energy_ratio(equator_run, pr.ParabolicCylinder(0.025, 0.0, 0.04))[2]
        assert 0.05 <= c2 / c1 <= 20.0

    def test_containment_enforced(self, equator_run):
        with pytest.raises(ContainmentError):
            pr.local_energy_ratio(equator_run, pr.ParabolicCylinder(0.025, 0.0, 0.09))


class TestReversePoincare:
    def test_constant_datum_lhs_zero(self):
        grid = RadialGrid(128, 3)
        p = SchemeParams(1e3, 0.06, 3)
        traj = run(p, grid, StepperConfig(dt=5e-5, checkpoint_stride=1), InitialDatum.constant())
        lhs, rhs, _ = pr.reverse_poincare_ratio(traj, pr.ParabolicCylinder(0.03, 0.0, 0.05))
        assert lhs == 0.0

    def test_slice_mean_minimizes_rhs(self, equator_run):
        # shifting the comparator a(t) by a constant can only grow the
        # deviation integral
        traj = equator_run
        cyl = pr.ParabolicCylinder(0.025, 0.0, 0.03)
        _, rhs, _ = pr.reverse_poincare_ratio(traj, cyl)
        grid = traj.grid
        cap = pr._cap_node_weights(grid, 0.0, 2 * cyl.R)
        V = float(np.sum(cap))
        vals = []
        for k in range(traj.n_checkpoints):
            g, z = traj.G[k], traj.Z[k]
            a_z = float(np.dot(cap, z)) / V + 0.25  # shifted comparator
            vals.append(float(np.dot(cap, g * g + (z - a_z) ** 2)))
        shifted = pr._time_integral(traj.times, np.asarray(vals),
                                    cyl.t0 - 4 * cyl.R ** 2, cyl.t0 + 4 * cyl.R ** 2)
        assert shifted >= rhs

    def test_ratio_bounded_on_ladder(self, equator_run):
        ratios = [pr.reverse_poincare_ratio(equator_run, pr.ParabolicCylinder(0.025, 0.0, R))[2]
                  for R in (0.02, 0.03, 0.04)]
        assert max(ratios) / min(ratios) < 50.0


class TestHybrid:
    def test_eps0_dominating_gives_zero(self, equator_run):
        assert pr.hybrid_ratio(equator_run, pr.ParabolicCylinder(0.025, 0.0, 0.02), 0.9) == 0.0

    def test_constant_datum_zero(self):
        grid = RadialGrid(128, 3)
        p = SchemeParams(1e3, 0.06, 3)
        traj = run(p, grid, StepperConfig(dt=5e-5, checkpoint_stride=1), InitialDatum.constant())
        assert pr.hybrid_ratio(traj, pr.ParabolicCylinder(0.03, 0.0, 0.05), 0.1) == 0.0

    def test_grows_as_eps0_shrinks(self, equator_run):
        cyl = pr.ParabolicCylinder(0.025, 0.0, 0.03)
        vals = [pr.hybrid_ratio(equator_run, cyl, e) for e in (0.5, 0.1, 0.02)]
        assert vals[0] <= vals[1] <= vals[2]

    def test_degenerate_energetic_flat_window_flagged(self):
        # spatially constant slices with |u| != 1 carry penalty energy but
        # zero deviation: that combination signals a bug upstream
        grid = RadialGrid(128, 3)
        p = SchemeParams(10.0, 1.0, 3)
        traj = frozen_trajectory(grid, p, np.linspace(0, 0.5, 2001),
                                 lambda r, t: np.zeros_like(r),
                                 lambda r, t: np.full_like(r, 0.5))
        with pytest.raises(NumericsError, match="degenerate"):
            pr.hybrid_ratio(traj, pr.ParabolicCylinder(0.3, 0.0, 0.05), 0.001)

    def test_eps0_validated(self, equator_run):
        with pytest.raises(ValueError):
            pr.hybrid_ratio(equator_run, pr.ParabolicCylinder(0.025, 0.0, 0.02), 1.5)


class TestDensity:
    def test_uniform_density_volume_formula(self):
        # density of e = c over P_R is c * 2 R^2 |B_R| / R^d = 2 c omega R^2 / d
        grid = RadialGrid(512, 3)
        times = np.linspace(0.0, 0.2, 201)
        c = 0.9
        dens = np.full((len(times), grid.n + 1), c)
        R = 0.125  # node-aligned: the sharp cut is exact
        got = pr.space_time_density_integral(grid, times, dens, 0.1, 0.0, R) / R ** 3
        assert got == pytest.approx(2 * c * grid.omega * R * R / 3, rel=1e-3)

    def test_containment(self, equator_run):
        with pytest.raises(ContainmentError):
            pr.density(equator_run, pr.ParabolicCylinder(0.001, 0.0, 0.05))


class TestSingularScan:
    def test_axis_segment_box_slope_is_two(self):
        pts = [(t, 0.0) for t in np.linspace(0.2, 0.6, 40001)]
        Rs = [0.1, 0.07, 0.05, 0.035, 0.025]
        counts = [pr.parabolic_box_count(pts, R, 3)[1] for R in Rs]
        slope = pr.box_count_slope(Rs, counts)
        assert abs(slope - 2.0) <= 0.2

    def test_single_center_slope_zero(self):
        pts = [(0.3, 0.0)]
        Rs = [0.1, 0.05, 0.025]
        counts = [pr.parabolic_box_count(pts, R, 3)[1] for R in Rs]
        assert counts == [4.0, 4.0, 4.0]  # 2^(d-1) ambient multiplier
        assert pr.box_count_slope(Rs, counts) == pytest.approx(0.0, abs=1e-12)

    def test_offaxis_ambient_multiplier(self):
        raw, amb = pr.parabolic_box_count([(0.3, 0.5)], 0.05, 3)
        assert raw == 1
        assert amb == pytest.approx(4.0 * (0.5 / 0.05) ** 2)

    def test_empty_flagged_set(self):
        grid = RadialGrid(128, 3)
        p = SchemeParams(1e3, 0.06, 3)
        traj = run(p, grid, StepperConfig(dt=5e-5, checkpoint_stride=1), InitialDatum.constant())
        rep = pr.singular_scan(traj, 0.5, [0.06, 0.05], [(0.03, 0.0), (0.03, 0.2)])
        assert rep.flagged == ()
        assert rep.box_counts == (0.0, 0.0)
        assert rep.dimension_slope is None

    def test_flagged_shrinks_with_eps0(self, equator_run):
        centers = [(t, 0.0) for t in np.linspace(0.02, 0.03, 5)]
        ladder = [0.03, 0.025, 0.02]
        small = pr.singular_scan(equator_run, 0.5, ladder, centers)
        large = pr.singular_scan(equator_run, 5.0, ladder, centers)
        assert set(large.flagged) <= set(small.flagged)

    def test_ladder_validation(self, equator_run):
        with pytest.raises(ValueError, match="nonempty"):
            pr.singular_scan(equator_run, 0.5, [], [(0.025, 0.0)])
        with pytest.raises(ValueError, match="decreasing"):
            pr.singular_scan(equator_run, 0.5, [0.02, 0.03], [(0.025, 0.0)])
        with pytest.raises(ValueError, match="4 cells"):
            pr.singular_scan(equator_run, 0.5, [0.02, 0.002], [(0.025, 0.0)])


class TestOffAxisComposition:
    def test_static_offaxis_density_factorizes(self):
        # for a time-independent density the space-time integral over P_R is
        # (window length) x (cap-restricted ball integral)
        from glheat.grid import offcenter_ball_average

        grid = RadialGrid(256, 3)
        times = np.linspace(0.0, 0.3, 601)
        prof = 1.0 + grid.r ** 2
        dens = np.tile(prof, (len(times), 1))
        rho0, R, t0 = 0.3, 0.1, 0.15
        got = pr.space_time_density_integral(grid, times, dens, t0, rho0, R)
        cap = offcenter_ball_average(grid, prof, rho0, R)
        assert got == pytest.approx(2 * R * R * cap, rel=1e-12)

    def test_offaxis_density_on_run(self, equator_run):
        # equator energy concentrates on the axis: an off-axis probe at the
        # same scale sees far less density
        on = pr.density(equator_run, pr.ParabolicCylinder(0.025, 0.0, 0.03))
        off = pr.density(equator_run, pr.ParabolicCylinder(0.025, 0.45, 0.03))
        assert 0.0 < off < 0.05 * on

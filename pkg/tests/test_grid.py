import math

import numpy as np
import pytest

from glheat.errors import ConfigError
from glheat.grid import (
    CorotationalField,
    InitialDatum,
    RadialGrid,
    ball_integral,
    boundary_flux_terms,
    dirichlet_energy,
    gl_energy_density,
    offcenter_ball_average,
    offcenter_ball_c_moment,
)
from glheat.scheme import SchemeParams


def test_grid_basics():
    g = RadialGrid(64, 3)
    assert g.r[0] == 0.0 and g.r[-1] == 1.0
    assert g.omega == pytest.approx(4 * math.pi)
    assert RadialGrid(32, 2).omega == pytest.approx(2 * math.pi)
    with pytest.raises(ValueError):
        RadialGrid(8, 3)


class TestBallIntegral:
    def test_unit_ball_volume_d3(self):
        g = RadialGrid(256, 3)
        assert ball_integral(g, np.ones(257)) == pytest.approx(4 * math.pi / 3, rel=1e-5)

    def test_unit_disk_area_d2(self):
        g = RadialGrid(256, 2)
        assert ball_integral(g, np.ones(257)) == pytest.approx(math.pi, rel=1e-5)

    def test_r_squared_d3(self):
        # 4 pi * int_0^1 r^4 dr = 4 pi / 5
        g = RadialGrid(256, 3)
        assert ball_integral(g, g.r ** 2) == pytest.approx(4 * math.pi / 5, rel=1e-4)

    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    def test_second_order_convergence(self, k):
        exact = 4 * math.pi / (3 + k)
        errs = []
        for n in (32, 64, 128):
            g = RadialGrid(n, 3)
            errs.append(abs(ball_integral(g, g.r ** k) - exact))
        assert errs[0] / errs[1] > 3.5
        assert errs[1] / errs[2] > 3.5

    def test_nonfinite_rejected(self):
        g = RadialGrid(32, 3)
        F = np.ones(33)
        F[5] = np.inf
        with pytest.raises(ValueError):
            ball_integral(g, F)

    def test_shape_checked(self):
        g = RadialGrid(32, 3)
        with pytest.raises(ValueError):
            ball_integral(g, np.ones(10))


class TestDirichletEnergy:
    def test_constant_datum_zero(self):
        g = RadialGrid(128, 3)
        f = InitialDatum.constant().build(g)
        assert dirichlet_energy(f, g) == 0.0

    def test_equator_energy_close_to_4pi(self):
        g = RadialGrid(512, 3)
        f = InitialDatum.equator().build(g)
        val = dirichlet_energy(f, g)
        assert val == pytest.approx(4 * math.pi, rel=0.02)
        # refinement converges toward the closed form
        errs = []
        for n in (256, 512, 1024):
            gn = RadialGrid(n, 3)
            errs.append(abs(dirichlet_energy(InitialDatum.equator().build(gn), gn) - 4 * math.pi))
        assert errs[2] < errs[1] < errs[0]

    def test_linear_polar_profile(self):
        # g = 0, zeta = r: |grad u|^2 = 1, energy = (1/2)(4 pi/3)
        g = RadialGrid(256, 3)
        f = CorotationalField(0.0, np.zeros(257), g.r.copy())
        assert dirichlet_energy(f, g) == pytest.approx(2 * math.pi / 3, rel=1e-5)


class TestEnergyDensity:
    def test_unit_constant_field_zero(self):
        g = RadialGrid(64, 3)
        p = SchemeParams(100.0, 1.0, 3)
        f = InitialDatum.constant().build(g)
        np.testing.assert_array_equal(gl_energy_density(f, p, g), np.zeros(65))

    def test_flat_half_modulus_field(self):
        # g = 0, zeta = 0.5 everywhere: penalty density (e/4) * 0.5625, no gradient
        g = RadialGrid(64, 3)
        p = SchemeParams(math.e, 1.0, 3)
        f = CorotationalField(0.0, np.zeros(65), 0.5 * np.ones(65))
        expected = (math.e / 4.0) * 0.5625
        np.testing.assert_allclose(gl_energy_density(f, p, g), expected, rtol=1e-14)

    def test_total_is_ball_integral(self):
        g = RadialGrid(128, 3)
        p = SchemeParams(50.0, 1.0, 3)
        f = InitialDatum.bubble(2.0).build(g)
        dens = gl_energy_density(f, p, g)
        assert ball_integral(g, dens) == pytest.approx(dirichlet_energy(f, g), rel=1e-12)


class TestInitialData:
    def test_equator_nodes(self):
        g = RadialGrid(64, 3)
        f = InitialDatum.equator().build(g)
        assert f.g[0] == 0.0
        assert np.all(f.g[1:] == 1.0)
        assert np.all(f.zeta == 0.0)

    def test_bubble_on_sphere_to_machine_precision(self):
        g = RadialGrid(512, 3)
        f = InitialDatum.bubble(3.0).build(g)
        np.testing.assert_allclose(f.modulus_sq, 1.0, rtol=0, atol=1e-15)
        assert f.g[-1] == pytest.approx(0.0, abs=1e-15)
        assert f.zeta[-1] == pytest.approx(1.0)

    def test_custom_roundtrip(self, tmp_path):
        g = RadialGrid(32, 3)
        ref = InitialDatum.bubble(1.0).build(g)
        path = tmp_path / "datum.txt"
        lines = [f"{r:.17g} {gv:.17g} {zv:.17g}" for r, gv, zv in zip(g.r, ref.g, ref.zeta)]
        path.write_text("# comment line\n" + "\n".join(lines) + "\n")
        f = InitialDatum.custom(str(path)).build(g)
        np.testing.assert_array_equal(f.g, ref.g)
        np.testing.assert_array_equal(f.zeta, ref.zeta)

    def test_custom_errors_carry_line_numbers(self, tmp_path):
        g = RadialGrid(32, 3)
        path = tmp_path / "bad.txt"
        rows = [f"{r:.17g} 0 1" for r in g.r]
        rows[10] = "0.5 0 1"  # wrong radius for node 10
        path.write_text("\n".join(rows) + "\n")
        with pytest.raises(ConfigError, match=":11:"):
            InitialDatum.custom(str(path)).build(g)
        path.write_text("\n".join(rows[:5]) + "\n")
        with pytest.raises(ConfigError, match="expected 33 node lines"):
            InitialDatum.custom(str(path)).build(g)
        rows = [f"{r:.17g} 0 1" for r in g.r]
        rows[0] = "0 0.5 1"  # g(0) must vanish
        path.write_text("\n".join(rows) + "\n")
        with pytest.raises(ConfigError, match="g = 0"):
            InitialDatum.custom(str(path)).build(g)

    def test_missing_file(self):
        g = RadialGrid(32, 3)
        with pytest.raises(ConfigError, match="nope.txt"):
            InitialDatum.custom("nope.txt").build(g)


class TestOffcenterBall:
    def test_centered_volume(self):
        g = RadialGrid(512, 3)
        # the centered rule is a midpoint indicator: O(h) staircase for
        # arbitrary R, O(h^2) when R sits on a node
        R = 0.37
        vol = offcenter_ball_average(g, np.ones(513), 0.0, R)
        assert vol == pytest.approx(4 * math.pi * R ** 3 / 3, rel=2e-2)
        R = 0.375  # 192 cells exactly
        vol = offcenter_ball_average(g, np.ones(513), 0.0, R)
        assert vol == pytest.approx(4 * math.pi * R ** 3 / 3, rel=1e-4)

    def test_offcenter_volume_exact_formula(self):
        g = RadialGrid(512, 3)
        vol = offcenter_ball_average(g, np.ones(513), 0.5, 0.25)
        assert vol == pytest.approx(4 * math.pi * 0.25 ** 3 / 3, rel=2e-3)

    def test_against_monte_carlo(self):
        # 10^6-sample Monte-Carlo oracle over the off-center ball
        g = RadialGrid(512, 3)
        rho0, R = 0.5, 0.25
        rng = np.random.default_rng(123)
        pts = rng.uniform(-R, R, size=(2 * 10 ** 6, 3))
        pts = pts[np.sum(pts * pts, axis=1) <= R * R][: 10 ** 6]
        pts[:, 0] += rho0
        r = np.linalg.norm(pts, axis=1)
        box_vol = 4 * math.pi * R ** 3 / 3

        F = 1.0 + g.r ** 2
        mc = np.mean(1.0 + r ** 2) * box_vol
        val = offcenter_ball_average(g, F, rho0, R)
        assert val == pytest.approx(mc, rel=5e-3)

        # first angular moment against the same sample
        c = pts[:, 0] / r
        mc_m1 = np.mean((1.0 + r ** 2) * c) * box_vol
        val_m1 = offcenter_ball_c_moment(g, F, rho0, R)
        assert val_m1 == pytest.approx(mc_m1, rel=5e-3)

    def test_centered_moment_vanishes(self):
        g = RadialGrid(128, 3)
        assert offcenter_ball_c_moment(g, 1.0 + g.r, 0.0, 0.3) == 0.0

    def test_containment_rejected(self):
        g = RadialGrid(64, 3)
        with pytest.raises(ValueError):
            offcenter_ball_average(g, np.ones(65), 0.5, 0.6)

    def test_offcenter_needs_d3(self):
        g = RadialGrid(64, 4)
        with pytest.raises(ValueError, match="d = 3"):
            offcenter_ball_average(g, np.ones(65), 0.2, 0.1)
        # centered is fine in any dimension
        offcenter_ball_average(g, np.ones(65), 0.0, 0.1)


class TestBoundaryFlux:
    def test_constant_datum(self):
        g = RadialGrid(64, 3)
        f = InitialDatum.constant().build(g)
        assert boundary_flux_terms(f, g) == (0.0, 0.0)

    def test_equator_tangential(self):
        # |grad_tau (x/|x|)|^2 = d-1 on the sphere: omega * (d-1) = 8 pi in d=3
        g = RadialGrid(128, 3)
        f = InitialDatum.equator().build(g)
        normal, tangential = boundary_flux_terms(f, g)
        assert tangential == pytest.approx(8 * math.pi, rel=1e-12)
        assert normal == pytest.approx(0.0, abs=1e-10)

    def test_linear_equatorial_profile_normal(self):
        # g(r) = r has g_r(1) = 1 exactly under the one-sided stencil
        g = RadialGrid(128, 3)
        f = CorotationalField(0.0, g.r.copy(), np.zeros(129))
        normal, _ = boundary_flux_terms(f, g)
        assert normal == pytest.approx(4 * math.pi, rel=1e-12)

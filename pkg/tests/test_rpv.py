"""Tests for the RPV reflectance model."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from satrf import autodiff as ad
from satrf import rpv

RHO0_A = (0.122, 0.105, 0.091)
SUN_ZEN = np.radians(52.1)
SUN_AZ = np.radians(142.5)
NADIR = np.array([0.0, 0.0, 1.0])


def sun_dir():
    return rpv.direction_from_angles(SUN_ZEN, SUN_AZ)


valid_params = st.tuples(
    st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.01, 1.0),
    st.floats(0.05, 1.95), st.floats(-0.95, 0.95), st.floats(0.0, 1.0),
).map(lambda t: rpv.RpvParams((t[0], t[1], t[2]), t[3], t[4], t[5]))

valid_dirs = st.tuples(st.floats(0.0, 85.0), st.floats(0.0, 360.0)).map(
    lambda t: rpv.direction_from_angles(np.radians(t[0]), np.radians(t[1])))


class TestParamValidation:
    def test_accepts_ranges(self):
        rpv.RpvParams((0.0, 0.5, 1.0), 0.0, -1.0, 0.0)
        rpv.RpvParams((1.0, 1.0, 1.0), 2.0, 1.0, 1.0)

    @pytest.mark.parametrize("kwargs", [
        dict(rho0=(1.2, 0.5, 0.5)),
        dict(rho0=(0.5, 0.5, 0.5), k=2.5),
        dict(rho0=(0.5, 0.5, 0.5), theta=-1.1),
        dict(rho0=(0.5, 0.5, 0.5), rhoc=1.5),
    ])
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(ValueError):
            rpv.RpvParams(**kwargs)


class TestAngles:
    def test_nadir_sun_and_view(self):
        a = rpv.angles_from_directions(NADIR, NADIR, NADIR)
        assert a.theta_ir == 0.0 and a.theta_r == 0.0 and a.g == 0.0

    def test_recovers_sun_zenith(self):
        a = rpv.angles_from_directions(NADIR, sun_dir(), NADIR)
        assert a.theta_ir == pytest.approx(SUN_ZEN, abs=1e-12)

    def test_antipodal_azimuths_at_equal_zenith(self):
        z = np.radians(30.0)
        wi = rpv.direction_from_angles(z, 0.0)
        wr = rpv.direction_from_angles(z, np.pi)
        a = rpv.angles_from_directions(NADIR, wi, wr)
        assert a.phi == pytest.approx(np.pi, abs=1e-9)
        # cos g = cos^2(30) - sin^2(30) = 0.5, so g = 60 degrees
        assert a.g == pytest.approx(np.radians(60.0), abs=1e-12)

    def test_below_surface_rejected(self):
        down = np.array([0.0, 0.0, -1.0])
        with pytest.raises(rpv.GeometryError):
            rpv.angles_from_directions(NADIR, down, NADIR)
        with pytest.raises(rpv.GeometryError):
            rpv.angles_from_directions(NADIR, NADIR, down)

    def test_non_unit_direction_rejected(self):
        with pytest.raises(ValueError, match="norm"):
            rpv.angles_from_directions(NADIR, np.array([0.0, 0.0, 2.0]), NADIR)

    def test_phase_angle_consistent_with_vectors(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            wi = rpv.direction_from_angles(rng.uniform(0, 1.4), rng.uniform(0, 2 * np.pi))
            wr = rpv.direction_from_angles(rng.uniform(0, 1.4), rng.uniform(0, 2 * np.pi))
            a = rpv.angles_from_directions(NADIR, wi, wr)
            assert np.cos(a.g) == pytest.approx(float(np.dot(wi, wr)), abs=1e-9)

    def test_capped_angles_matches_strict_version(self):
        rng = np.random.default_rng(1)
        zi = rng.uniform(0.05, 1.3, size=50)
        ai = rng.uniform(0, 2 * np.pi, size=50)
        zr = rng.uniform(0.05, 1.3, size=50)
        ar = rng.uniform(0, 2 * np.pi, size=50)
        wi = np.stack([rpv.direction_from_angles(z, a) for z, a in zip(zi, ai)])
        wr = np.stack([rpv.direction_from_angles(z, a) for z, a in zip(zr, ar)])
        n = np.broadcast_to(NADIR, (50, 3))
        ti, tr, phi, g = rpv.capped_angles(n, wi, wr)
        for j in range(50):
            a = rpv.angles_from_directions(NADIR, wi[j], wr[j])
            assert ti[j] == pytest.approx(a.theta_ir, abs=1e-9)
            assert tr[j] == pytest.approx(a.theta_r, abs=1e-9)
            assert phi[j] == pytest.approx(a.phi, abs=1e-9)
            assert g[j] == pytest.approx(a.g, abs=1e-9)


class TestMinnaert:
    def test_k_one_is_unity(self):
        for t1, t2 in [(0.0, 0.0), (0.5, 1.0), (1.2, 0.3)]:
            assert rpv.minnaert(t1, t2, 1.0) == 1.0

    def test_nadir_k_two(self):
        assert rpv.minnaert(0.0, 0.0, 2.0) == pytest.approx(2.0, abs=1e-12)

    def test_sixty_degrees_k_half(self):
        t = np.radians(60.0)
        assert rpv.minnaert(t, t, 0.5) == pytest.approx(2.0, rel=1e-12)

    def test_ninety_degrees_rejected(self):
        with pytest.raises(ad.DomainError):
            rpv.minnaert(np.pi / 2, 0.3, 0.5)


class TestHenyeyGreenstein:
    def test_theta_zero_is_unity(self):
        for g in np.linspace(0, np.pi, 7):
            assert rpv.henyey_greenstein(g, 0.0) == 1.0

    def test_backscatter_value_at_zero_phase(self):
        assert rpv.henyey_greenstein(0.0, -0.174) == pytest.approx(
            1.720711266408316, rel=1e-12)

    @pytest.mark.parametrize("theta,increasing_in_g", [(-0.4, False), (0.4, True)])
    def test_monotone_in_phase_angle(self, theta, increasing_in_g):
        g = np.linspace(0.0, np.pi, 60)
        f = rpv.henyey_greenstein(g, theta)
        d = np.diff(f)
        if increasing_in_g:
            assert np.all(d > 0)
        else:
            assert np.all(d < 0)

    def test_degenerate_base_rejected(self):
        with pytest.raises(ad.DomainError):
            rpv.henyey_greenstein(np.pi, 1.0)


class TestGeometricFactor:
    def test_hotspot_geometry_is_zero(self):
        assert rpv.geometric_factor(0.7, 0.7, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_single_tangent(self):
        assert rpv.geometric_factor(np.radians(45.0), 0.0, 1.0) == pytest.approx(1.0, rel=1e-12)

    def test_opposed_forty_fives(self):
        a = np.radians(45.0)
        assert rpv.geometric_factor(a, a, np.pi) == pytest.approx(2.0, rel=1e-12)

    def test_radicand_clamped(self):
        # nearly identical angles can push the radicand slightly negative
        out = rpv.geometric_factor(0.7, np.nextafter(0.7, 1.0), 0.0)
        assert out >= 0.0 and np.isfinite(out)


class TestHotspotTerm:
    def test_rhoc_one_is_unity(self):
        for g in [0.0, 0.5, 10.0]:
            assert rpv.hotspot(1.0, g) == 1.0

    def test_maximum_at_zero_distance(self):
        assert rpv.hotspot(0.0, 0.0) == 2.0

    def test_hand_value(self):
        assert rpv.hotspot(0.5, 1.0) == pytest.approx(1.25, abs=1e-15)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 50.0))
    @settings(max_examples=100, deadline=None)
    def test_range_and_peak(self, rhoc, g):
        h = rpv.hotspot(rhoc, g)
        assert 1.0 <= h <= 2.0 - rhoc + 1e-15
        assert rpv.hotspot(rhoc, 0.0) >= h


class TestRpvFactor:
    def test_lambertian_limit_exact(self):
        p = rpv.RpvParams(RHO0_A, k=1.0, theta=0.0, rhoc=1.0)
        a = rpv.angles_from_directions(NADIR, sun_dir(),
                                       rpv.direction_from_angles(0.4, 2.0))
        np.testing.assert_array_equal(rpv.rpv_factor(p, a), np.array(RHO0_A))

    @given(params=valid_params, wi=valid_dirs, wr=valid_dirs)
    @settings(max_examples=200, deadline=None)
    def test_reciprocity(self, params, wi, wr):
        f1 = rpv.rpv_factor(params, rpv.angles_from_directions(NADIR, wi, wr))
        f2 = rpv.rpv_factor(params, rpv.angles_from_directions(NADIR, wr, wi))
        assert np.max(np.abs(f1 - f2)) < 1e-12

    @given(params=valid_params, wi=valid_dirs, wr=valid_dirs)
    @settings(max_examples=200, deadline=None)
    def test_nonnegative(self, params, wi, wr):
        f = rpv.rpv_factor(params, rpv.angles_from_directions(NADIR, wi, wr))
        assert np.all(f >= 0.0)

    def test_backscatter_exceeds_forward_for_negative_theta(self):
        p = rpv.RpvParams(RHO0_A, 0.996, -0.174, 0.979)
        view_back = rpv.direction_from_angles(SUN_ZEN, SUN_AZ)
        view_fwd = rpv.direction_from_angles(SUN_ZEN, SUN_AZ + np.pi)
        fb = rpv.rpv_factor(p, rpv.angles_from_directions(NADIR, sun_dir(), view_back))
        ff = rpv.rpv_factor(p, rpv.angles_from_directions(NADIR, sun_dir(), view_fwd))
        assert np.all(fb > ff)


class TestShade:
    def test_lambertian_nadir_sun(self):
        p = rpv.RpvParams(RHO0_A)
        c = rpv.shade(p, NADIR, NADIR, rpv.direction_from_angles(0.3, 0.0))
        np.testing.assert_allclose(c, RHO0_A, atol=1e-15)

    def test_cosine_factor_at_sixty_degrees(self):
        p = rpv.RpvParams(RHO0_A)
        wi = rpv.direction_from_angles(np.radians(60.0), 1.0)
        c = rpv.shade(p, NADIR, wi, NADIR)
        np.testing.assert_allclose(c, 0.5 * np.asarray(RHO0_A), atol=1e-12)

    def test_channel_ordering_preserved(self):
        p = rpv.RpvParams((0.9, 0.05, 0.4))
        c = rpv.shade(p, NADIR, NADIR, NADIR)
        assert c[0] > c[2] > c[1]

    def test_parameter_gradients_match_finite_differences(self):
        angles = rpv.angles_from_directions(
            NADIR, sun_dir(), rpv.direction_from_angles(0.35, 2.4))
        base = dict(rho0=0.3, k=0.8, theta=-0.2, rhoc=0.6)

        def shade_np(v):
            fac = (rpv.minnaert(angles.theta_ir, angles.theta_r, v["k"])
                   * rpv.henyey_greenstein(angles.g, v["theta"])
                   * rpv.hotspot(v["rhoc"], rpv.geometric_factor(
                       angles.theta_ir, angles.theta_r, angles.phi)))
            return float(v["rho0"] * fac)

        g = ad.Graph()
        leaves = {k: g.tensor(v, param=True) for k, v in base.items()}
        fac = rpv.angular_factor(angles.theta_ir, angles.theta_r, angles.phi,
                                 angles.g, leaves["k"], leaves["theta"], leaves["rhoc"])
        out = leaves["rho0"] * fac
        grads = ad.backward(out)
        h = 1e-6
        for name in base:
            up = dict(base); up[name] = base[name] + h
            dn = dict(base); dn[name] = base[name] - h
            fd = (shade_np(up) - shade_np(dn)) / (2 * h)
            an = float(grads[leaves[name].idx])
            assert abs(an - fd) / max(abs(fd), 1e-8) < 1e-4, name


class TestBrfSweep:
    def test_lambertian_grid_is_constant(self):
        p = rpv.RpvParams(RHO0_A)
        sw = rpv.brf_sweep(p, NADIR, sun_dir(), 30, 60)
        for ch in range(3):
            assert np.ptp(sw.values[..., ch]) == 0.0
            assert sw.values[0, 0, ch] == RHO0_A[ch]

    def test_backward_max_in_sun_half_plane(self):
        p = rpv.RpvParams(RHO0_A, 0.996, -0.174, 0.979)
        sw = rpv.brf_sweep(p, NADIR, sun_dir(), 45, 90)
        lum = sw.values.mean(axis=-1)
        iz, ia = np.unravel_index(np.argmax(lum), lum.shape)
        dist = abs((sw.azimuth_deg[ia] - sw.sun_azimuth_deg + 180.0) % 360.0 - 180.0)
        assert dist < 90.0

    def test_hotspot_argmax_cell(self):
        p = rpv.RpvParams(RHO0_A, 0.996, -0.174, 0.0)
        sw = rpv.brf_sweep(p, NADIR, sun_dir(), 90, 360)
        lum = sw.values.mean(axis=-1)
        iz, ia = np.unravel_index(np.argmax(lum), lum.shape)
        assert abs(sw.zenith_deg[iz] - sw.sun_zenith_deg) <= 0.55
        assert abs((sw.azimuth_deg[ia] - sw.sun_azimuth_deg + 180.0) % 360.0 - 180.0) <= 0.55

    def test_sweep_metadata(self):
        sw = rpv.brf_sweep(rpv.RpvParams(RHO0_A), NADIR, sun_dir(), 10, 12)
        assert sw.sun_zenith_deg == pytest.approx(52.1, abs=1e-9)
        assert sw.sun_azimuth_deg == pytest.approx(142.5, abs=1e-9)
        assert sw.values.shape == (10, 12, 3)
        assert sw.zenith_deg.max() < 90.0

    def test_too_few_steps_rejected(self):
        with pytest.raises(ValueError):
            rpv.brf_sweep(rpv.RpvParams(RHO0_A), NADIR, sun_dir(), 1, 10)

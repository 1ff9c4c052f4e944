"""Tests for PSNR/SSIM/MAE, DSM extraction, and the evaluation report."""

import numpy as np
import pytest

from satrf import field, metrics, scene

IDENTITY = scene.SceneTransform(center=(0.0, 0.0, 0.0), scale=1.0)


def _step_field(z0=0.1, x_slope=0.0, y_slope=0.0, sharpness=500.0):
    """A field whose density steps on at z = z0 + x_slope*x + y_slope*y.

    One hidden unit computes relu(-s*(z - plane)); the density head turns
    that into ~0 above the plane and a steep ramp below it.
    """
    cfg = field.FieldConfig(trunk_layers=1, trunk_width=4, pe_frequencies=0,
                            skip_at=0, seed=0)
    params = {k: np.zeros_like(v) for k, v in field.init_params(cfg).items()}
    params["trunk0_w"][0, 0] = sharpness * x_slope
    params["trunk0_w"][1, 0] = sharpness * y_slope
    params["trunk0_w"][2, 0] = -sharpness
    params["trunk0_b"][0] = sharpness * z0
    params["sigma_w"][0, 0] = 10.0
    params["sigma_b"][0] = -10.0
    return field.RadianceField(cfg, params)


def _empty_field():
    cfg = field.FieldConfig(trunk_layers=1, trunk_width=4, pe_frequencies=0,
                            skip_at=0, seed=0)
    params = {k: np.zeros_like(v) for k, v in field.init_params(cfg).items()}
    params["sigma_b"][:] = -40.0
    return field.RadianceField(cfg, params)


class TestPsnr:
    def test_identical_capped(self):
        img = np.random.default_rng(0).random((8, 8, 3))
        assert metrics.psnr(img, img) == metrics.PSNR_CAP_DB

    def test_known_value(self):
        a = np.zeros((10, 10))
        b = np.full((10, 10), 0.1)
        assert metrics.psnr(a, b) == pytest.approx(20.0)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((6, 6)), rng.random((6, 6))
        assert metrics.psnr(a, b) == metrics.psnr(b, a)

    def test_data_range(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 0.1)
        assert metrics.psnr(a, b, data_range=2.0) == pytest.approx(
            metrics.psnr(a, b) + 20.0 * np.log10(2.0))

    def test_shape_mismatch(self):
        with pytest.raises(metrics.MetricError):
            metrics.psnr(np.zeros((3, 3)), np.zeros((4, 4)))

    def test_flip_invariance(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((6, 6, 3)), rng.random((6, 6, 3))
        ref = metrics.psnr(a, b)
        assert metrics.psnr(a[::-1], b[::-1]) == pytest.approx(ref, abs=1e-12)
        assert metrics.psnr(a[:, ::-1], b[:, ::-1]) == pytest.approx(ref, abs=1e-12)


class TestSsim:
    def test_identical_is_one(self):
        img = np.random.default_rng(2).random((16, 16))
        assert metrics.ssim(img, img) == 1.0

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert metrics.ssim(a, b) == metrics.ssim(b, a)

    def test_inverted_checkerboard_negative(self):
        a = np.indices((16, 16)).sum(axis=0) % 2.0
        assert metrics.ssim(a, 1.0 - a) < 0.0

    def test_colour_uses_channel_mean(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
        assert metrics.ssim(a, b) == metrics.ssim(a.mean(axis=2), b.mean(axis=2))

    def test_small_image_rejected(self):
        with pytest.raises(metrics.MetricError):
            metrics.ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_flip_invariance(self):
        rng = np.random.default_rng(5)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        ref = metrics.ssim(a, b)
        assert metrics.ssim(a[::-1], b[::-1]) == pytest.approx(ref, abs=1e-12)
        assert metrics.ssim(a[:, ::-1], b[:, ::-1]) == pytest.approx(ref, abs=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_reference_implementation(self, seed):
        skim = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(seed)
        base = np.clip(np.linspace(0, 1, 24)[None, :] * np.ones((24, 1))
                       + 0.15 * rng.standard_normal((24, 24)), 0, 1)
        noisy = np.clip(base + 0.1 * rng.standard_normal((24, 24)), 0, 1)
        ours = metrics.ssim(base, noisy)
        ref = skim.structural_similarity(
            base, noisy, win_size=11, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, data_range=1.0)
        assert ours == pytest.approx(ref, abs=1e-12)


class TestMae:
    def _dsm(self, grid, valid=None):
        grid = np.asarray(grid, dtype=float)
        if valid is None:
            valid = np.ones_like(grid, dtype=bool)
        return metrics.Dsm(grid=grid, valid=valid)

    def test_identical_zero(self):
        d = self._dsm(np.random.default_rng(0).random((5, 5)))
        assert metrics.mae(d, d) == 0.0

    def test_uniform_offset(self):
        g = np.random.default_rng(1).random((5, 5))
        assert metrics.mae(self._dsm(g + 0.3), self._dsm(g)) == pytest.approx(0.3)

    def test_hand_value(self):
        a = self._dsm([[1.0, 3.0]])
        b = self._dsm([[0.0, 0.0]])
        assert metrics.mae(a, b) == pytest.approx(2.0)

    def test_only_joint_valid_counted(self):
        a = self._dsm([[1.0, 100.0]], valid=np.array([[True, False]]))
        b = self._dsm([[0.0, 0.0]])
        assert metrics.mae(a, b) == pytest.approx(1.0)
        assert metrics.joint_valid_fraction(a, b) == pytest.approx(0.5)

    def test_no_overlap_rejected(self):
        a = self._dsm([[1.0]], valid=np.array([[False]]))
        b = self._dsm([[0.0]])
        with pytest.raises(metrics.MetricError):
            metrics.mae(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(metrics.MetricError):
            metrics.mae(self._dsm(np.zeros((2, 2))), self._dsm(np.zeros((3, 3))))

    def test_translation_equivariance(self):
        # with a uniform offset sign, raising one DSM by c raises MAE by c
        g = np.random.default_rng(6).random((5, 5))
        gt = self._dsm(g)
        base = metrics.mae(self._dsm(g + 0.3), gt)
        assert metrics.mae(self._dsm(g + 0.5), gt) == pytest.approx(base + 0.2)


class TestDsmTypes:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(metrics.MetricError):
            metrics.Dsm(grid=np.zeros((3, 3)), valid=np.ones((2, 2), bool))

    def test_nonfinite_valid_cell_rejected(self):
        grid = np.array([[0.0, np.nan]])
        with pytest.raises(metrics.MetricError):
            metrics.Dsm(grid=grid, valid=np.array([[True, True]]))

    def test_nonfinite_invalid_cell_allowed(self):
        grid = np.array([[0.0, np.nan]])
        d = metrics.Dsm(grid=grid, valid=np.array([[True, False]]))
        assert d.valid.sum() == 1

    def test_from_heightfield(self):
        hf = scene.generate_heightfield(2, dims=17)
        d = metrics.dsm_from_heightfield(hf, 9)
        assert d.grid.shape == (9, 9) and d.valid.all()
        # row 0 samples the north edge (y = +1)
        assert d.grid[0, 0] == pytest.approx(hf.sample(-1.0, 1.0))
        assert d.grid[-1, -1] == pytest.approx(hf.sample(1.0, -1.0))


class TestExtractDsm:
    def test_flat_plane(self):
        rf = _step_field(z0=0.1)
        d = metrics.extract_dsm(rf, IDENTITY, 8, n_samples=256,
                                zmin=-0.2, zmax=0.5)
        assert d.valid.all()
        np.testing.assert_allclose(d.grid, 0.1, atol=0.02)

    @pytest.mark.parametrize("res", [8, 16])
    def test_tilted_plane_x(self, res):
        # same tolerance at both lattice resolutions: refining the grid only
        # moves values by sampling-scale effects
        rf = _step_field(z0=0.1, x_slope=0.2)
        d = metrics.extract_dsm(rf, IDENTITY, res, n_samples=256,
                                zmin=-0.2, zmax=0.5)
        xs = np.linspace(-1.0, 1.0, res)
        expect = 0.1 + 0.2 * xs
        np.testing.assert_allclose(d.grid, np.broadcast_to(expect, (res, res)),
                                   atol=0.02)

    def test_tilted_plane_y_orientation(self):
        # row 0 of the DSM is the north edge, where this plane is highest
        rf = _step_field(z0=0.1, y_slope=0.2)
        d = metrics.extract_dsm(rf, IDENTITY, 8, n_samples=256,
                                zmin=-0.2, zmax=0.5)
        ys = np.linspace(1.0, -1.0, 8)
        expect = (0.1 + 0.2 * ys)[:, None]
        np.testing.assert_allclose(d.grid, np.broadcast_to(expect, (8, 8)),
                                   atol=0.02)

    def test_empty_field_all_invalid(self):
        d = metrics.extract_dsm(_empty_field(), IDENTITY, 4, n_samples=64,
                                zmin=-0.2, zmax=0.5)
        assert not d.valid.any()
        gt = metrics.Dsm(grid=np.zeros((4, 4)), valid=np.ones((4, 4), bool))
        with pytest.raises(metrics.MetricError):
            metrics.mae(d, gt)

    def test_resolution_validated(self):
        with pytest.raises(metrics.MetricError):
            metrics.extract_dsm(_step_field(), IDENTITY, 1)


class TestRenderView:
    def _spec(self):
        return scene.ViewSpec(name="probe", role="test", zenith_deg=0.0,
                              azimuth_deg=0.0, width=6, height=6, extent=0.8,
                              z0=2.0, sun_zenith_deg=20.0, sun_azimuth_deg=90.0)

    def test_depth_and_shapes(self):
        rf = _step_field(z0=0.1)
        img, depth, acc = metrics.render_view(rf, self._spec(), IDENTITY,
                                              n_samples=256, zmin=-0.2, zmax=0.5)
        assert img.shape == (6, 6, 3)
        assert depth.shape == (6, 6)
        np.testing.assert_allclose(depth, 2.0 - 0.1, atol=0.02)
        np.testing.assert_allclose(acc, 1.0, atol=1e-6)
        assert np.isfinite(img).all() and img.min() >= 0.0

    def test_deterministic(self):
        rf = _step_field(z0=0.1)
        a = metrics.render_view(rf, self._spec(), IDENTITY, n_samples=64,
                                zmin=-0.2, zmax=0.5)
        b = metrics.render_view(rf, self._spec(), IDENTITY, n_samples=64,
                                zmin=-0.2, zmax=0.5)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_modes_agree_on_step_surface(self):
        # constant material and an opaque surface: sur and vol coincide
        rf = _step_field(z0=0.1)
        spec = self._spec()
        img_s, _, _ = metrics.render_view(rf, spec, IDENTITY, mode="sur",
                                          n_samples=128, zmin=-0.2, zmax=0.5)
        img_v, _, _ = metrics.render_view(rf, spec, IDENTITY, mode="vol",
                                          n_samples=128, zmin=-0.2, zmax=0.5)
        np.testing.assert_allclose(img_s, img_v, atol=1e-3)


class TestReport:
    def test_round_trip(self, tmp_path):
        rows = [{"name": "easy", "psnr_db": 31.25, "ssim": 0.91,
                 "mae": None, "valid_fraction": None},
                {"name": "dsm", "psnr_db": None, "ssim": None,
                 "mae": 0.0123456789, "valid_fraction": 1.0}]
        path = tmp_path / "report.csv"
        metrics.write_report(path, rows)
        back = metrics.read_report(path)
        assert back == rows

    def test_bad_header(self, tmp_path):
        path = tmp_path / "report.csv"
        path.write_text("wrong\n")
        with pytest.raises(metrics.MetricError):
            metrics.read_report(path)


class TestEvaluate:
    def test_row_structure(self):
        ds = scene.gen_scene(seed=2, dims=16, n_views=2, roughness=0.0)
        cfg = field.FieldConfig(trunk_layers=2, trunk_width=8,
                                pe_frequencies=2, skip_at=0, seed=1)
        rows = metrics.evaluate(field.RadianceField(cfg), ds,
                                dsm_resolution=16, n_samples=48)
        names = [r["name"] for r in rows]
        assert names == ["easy", "hard", "vhard", "dsm"]
        for r in rows[:3]:
            assert np.isfinite(r["psnr_db"]) and np.isfinite(r["ssim"])
        assert rows[3]["mae"] >= 0.0
        assert 0.0 <= rows[3]["valid_fraction"] <= 1.0

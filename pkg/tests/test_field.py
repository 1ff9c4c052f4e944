"""Tests for the MLP field: encoding, heads, normals, checkpoints."""

import numpy as np
import pytest

from satrf import autodiff as ad
from satrf import field

SMALL = field.FieldConfig(trunk_layers=3, trunk_width=16, pe_frequencies=4,
                          skip_at=2, seed=7)
SOFTPLUS_ZERO = 0.6931471805599453


class TestPositionalEncoding:
    def test_zero_frequencies_identity(self):
        x = np.random.default_rng(0).standard_normal((5, 3))
        out = field.positional_encoding(x, 0)
        np.testing.assert_array_equal(out, x)

    def test_shape(self):
        x = np.zeros((4, 3))
        assert field.positional_encoding(x, 6).shape == (4, 3 + 6 * 6)

    def test_known_values(self):
        x = np.array([[0.5, 0.0, 1.0]])
        out = field.positional_encoding(x, 2)
        np.testing.assert_array_equal(out[0, :3], [0.5, 0.0, 1.0])
        # j=0 block: sin/cos of pi*x
        sin0, cos0 = out[0, 3:6], out[0, 6:9]
        np.testing.assert_allclose(sin0, np.sin(np.pi * x[0]), atol=1e-15)
        np.testing.assert_allclose(cos0, np.cos(np.pi * x[0]), atol=1e-15)
        # j=1 block: sin/cos of 2*pi*x
        np.testing.assert_allclose(out[0, 9:12], np.sin(2 * np.pi * x[0]), atol=1e-15)
        np.testing.assert_allclose(out[0, 12:15], np.cos(2 * np.pi * x[0]), atol=1e-15)

    def test_tensor_matches_array(self):
        x = np.random.default_rng(1).standard_normal((6, 3))
        g = ad.Graph()
        xt = g.tensor(x)
        out_t = field.positional_encoding(xt, 3)
        out_a = field.positional_encoding(x, 3)
        np.testing.assert_array_equal(ad.value_of(out_t), out_a)


class TestInit:
    def test_deterministic(self):
        a = field.init_params(SMALL)
        b = field.init_params(SMALL)
        assert sorted(a) == sorted(b)
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

    def test_seed_changes_weights(self):
        a = field.init_params(SMALL)
        b = field.init_params(field.FieldConfig(trunk_layers=3, trunk_width=16,
                                                pe_frequencies=4, skip_at=2, seed=8))
        assert np.any(a["trunk0_w"] != b["trunk0_w"])

    def test_shapes_include_skip(self):
        p = field.init_params(SMALL)
        pe = SMALL.pe_dim
        assert p["trunk0_w"].shape == (pe, 16)
        assert p["trunk1_w"].shape == (16, 16)
        assert p["trunk2_w"].shape == (16 + pe, 16)  # skip concat layer
        assert p["sigma_w"].shape == (16, 1)
        assert p["rho0_w"].shape == (16, 3)
        for h in ("k", "theta", "rhoc"):
            assert p[f"{h}_w"].shape == (16, 1)

    def test_biases_zero_weights_bounded(self):
        p = field.init_params(SMALL)
        for name, arr in p.items():
            if name.endswith("_b"):
                assert np.all(arr == 0.0)
        bound = np.sqrt(6.0 / (16 + 16))
        assert np.abs(p["trunk1_w"]).max() <= bound


class TestForward:
    def test_shapes_and_ranges(self):
        p = field.init_params(SMALL)
        x = np.random.default_rng(2).uniform(-1, 1, (40, 3))
        out = field.forward(p, x, SMALL)
        assert out["sigma"].shape == (40,)
        assert out["rho0"].shape == (40, 3)
        assert np.all(out["sigma"] >= 0)
        assert np.all((out["rho0"] > 0) & (out["rho0"] < 1))
        assert np.all((out["k"] > 0) & (out["k"] < 2))
        assert np.all((out["theta"] > -1) & (out["theta"] < 1))
        assert np.all((out["rhoc"] > 0) & (out["rhoc"] < 1))

    def test_density_only(self):
        p = field.init_params(SMALL)
        out = field.forward(p, np.zeros((3, 3)), SMALL, heads=())
        assert set(out) == {"sigma"}

    def test_head_subset(self):
        p = field.init_params(SMALL)
        out = field.forward(p, np.zeros((3, 3)), SMALL, heads=("rho0",))
        assert set(out) == {"sigma", "rho0"}

    def test_zero_weights_give_softplus_zero_density(self):
        p = {k: np.zeros_like(v) for k, v in field.init_params(SMALL).items()}
        out = field.forward(p, np.random.default_rng(0).random((5, 3)), SMALL)
        np.testing.assert_allclose(out["sigma"], SOFTPLUS_ZERO, rtol=0, atol=1e-15)
        np.testing.assert_allclose(out["rho0"], 0.5, atol=1e-15)
        np.testing.assert_allclose(out["k"], 1.0, atol=1e-15)
        np.testing.assert_allclose(out["theta"], 0.0, atol=1e-15)

    def test_tensor_path_matches_array_path(self):
        p = field.init_params(SMALL)
        x = np.random.default_rng(3).uniform(-1, 1, (10, 3))
        plain = field.forward(p, x, SMALL)
        g = ad.Graph()
        tensors = {k: g.tensor(v, param=True) for k, v in p.items()}
        graphed = field.forward(tensors, x, SMALL)
        for key in plain:
            np.testing.assert_array_equal(ad.value_of(graphed[key]), plain[key])


class TestNormals:
    def test_gradient_matches_fd(self):
        p = field.init_params(SMALL)
        x = np.random.default_rng(4).uniform(-0.8, 0.8, (6, 3))
        grad = field.density_gradients(p, x, SMALL)
        h = 1e-6
        for i in range(x.shape[0]):
            for j in range(3):
                xp = x.copy(); xp[i, j] += h
                xm = x.copy(); xm[i, j] -= h
                fd = (field.forward(p, xp, SMALL, heads=())["sigma"][i]
                      - field.forward(p, xm, SMALL, heads=())["sigma"][i]) / (2 * h)
                assert abs(fd - grad[i, j]) <= 1e-4 * max(1.0, abs(fd))

    def test_normals_unit_and_against_gradient(self):
        p = field.init_params(SMALL)
        x = np.random.default_rng(5).uniform(-0.8, 0.8, (20, 3))
        n, degenerate = field.analytic_normals(p, x, SMALL)
        grad = field.density_gradients(p, x, SMALL)
        ok = ~degenerate
        np.testing.assert_allclose(np.linalg.norm(n[ok], axis=1), 1.0, atol=1e-12)
        # n is anti-parallel to the density gradient
        dots = (n[ok] * grad[ok]).sum(axis=1)
        np.testing.assert_allclose(dots, -np.linalg.norm(grad[ok], axis=1), atol=1e-9)

    def test_constant_density_degenerate(self):
        p = {k: np.zeros_like(v) for k, v in field.init_params(SMALL).items()}
        n, degenerate = field.analytic_normals(p, np.zeros((4, 3)), SMALL)
        assert degenerate.all()
        np.testing.assert_array_equal(n, np.tile([0.0, 0.0, 1.0], (4, 1)))


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        p = field.init_params(SMALL)
        path = tmp_path / "f.rfld"
        field.save_field(path, SMALL, p)
        cfg2, p2 = field.load_field(path)
        assert cfg2 == SMALL
        assert sorted(p2) == sorted(p)
        for k in p:
            np.testing.assert_array_equal(p2[k], p[k])

    def test_byte_stable(self, tmp_path):
        p = field.init_params(SMALL)
        a, b = tmp_path / "a.rfld", tmp_path / "b.rfld"
        field.save_field(a, SMALL, p)
        field.save_field(b, SMALL, p)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.rfld"
        path.write_bytes(b"XXXX" + b"\0" * 64)
        with pytest.raises(field.CheckpointError):
            field.load_field(path)

    def test_truncation(self, tmp_path):
        p = field.init_params(SMALL)
        path = tmp_path / "t.rfld"
        field.save_field(path, SMALL, p)
        path.write_bytes(path.read_bytes()[:-9])
        with pytest.raises(field.CheckpointError):
            field.load_field(path)


class TestRadianceField:
    def test_query(self):
        rf = field.RadianceField(SMALL)
        sample = rf.query([0.1, -0.2, 0.3])
        assert sample.sigma >= 0.0
        assert 0.0 <= sample.params.k <= 2.0

    def test_normal(self):
        rf = field.RadianceField(SMALL)
        n, degenerate = rf.normal([0.1, 0.2, -0.1])
        if not degenerate:
            assert abs(np.linalg.norm(n) - 1.0) < 1e-12

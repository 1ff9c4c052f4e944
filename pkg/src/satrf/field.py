"""The radiance-field network.

A positional-encoded MLP trunk feeding a softplus density head, a feature
layer, and four single-layer heads for the reflectance parameters.  The
forward pass is written against the autodiff dispatch layer, so it runs on
plain arrays for inference and on graph tensors during training.  Viewing
direction never enters the network; all view dependence lives in the
reflectance model downstream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad
from . import nn
from .rpv import RpvParams

CHECKPOINT_MAGIC = b"RFLD"
CHECKPOINT_VERSION = 1

RPV_HEADS = ("rho0", "k", "theta", "rhoc")
NORMAL_EPS = 1e-8


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class FieldConfig:
    trunk_layers: int = 8
    trunk_width: int = 256
    pe_frequencies: int = 10
    skip_at: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.trunk_layers < 1:
            raise ValueError("trunk_layers must be >= 1")
        if self.pe_frequencies < 0:
            raise ValueError("pe_frequencies must be >= 0")
        if self.trunk_width < 1:
            raise ValueError("trunk_width must be >= 1")

    @property
    def pe_dim(self) -> int:
        return 3 + 6 * self.pe_frequencies


@dataclass
class FieldSample:
    """Density plus reflectance parameters at one point."""

    sigma: float
    params: RpvParams
    normal: np.ndarray | None = None


def positional_encoding(x, frequencies: int):
    """Concatenate x with sin/cos(2^j pi x) for j = 0..frequencies-1.

    ``x`` has shape (N,3); works on arrays and on graph tensors.
    """
    if frequencies == 0:
        return x
    parts = [x]
    for j in range(frequencies):
        scaled = x * (float(2 ** j) * np.pi)
        parts.append(ad.sin(scaled))
        parts.append(ad.cos(scaled))
    return ad.concat(parts, axis=1)


def init_params(cfg: FieldConfig) -> dict[str, np.ndarray]:
    """Fresh weight dict for the given architecture, deterministic in the seed."""
    rng = np.random.default_rng(cfg.seed)
    params: dict[str, np.ndarray] = {}
    in_dim = cfg.pe_dim
    for i in range(cfg.trunk_layers):
        fan_in = in_dim if i == 0 else cfg.trunk_width
        if i == cfg.skip_at and i > 0:
            fan_in += in_dim
        w, b = nn.init_linear(rng, fan_in, cfg.trunk_width)
        params[f"trunk{i}_w"] = w
        params[f"trunk{i}_b"] = b
    params["sigma_w"], params["sigma_b"] = nn.init_linear(rng, cfg.trunk_width, 1)
    params["feat_w"], params["feat_b"] = nn.init_linear(rng, cfg.trunk_width, cfg.trunk_width)
    params["rho0_w"], params["rho0_b"] = nn.init_linear(rng, cfg.trunk_width, 3)
    params["k_w"], params["k_b"] = nn.init_linear(rng, cfg.trunk_width, 1)
    params["theta_w"], params["theta_b"] = nn.init_linear(rng, cfg.trunk_width, 1)
    params["rhoc_w"], params["rhoc_b"] = nn.init_linear(rng, cfg.trunk_width, 1)
    return params


def head_param_names(heads=RPV_HEADS) -> list[str]:
    names = []
    for h in heads:
        names.extend([f"{h}_w", f"{h}_b"])
    return names


def forward(params, x, cfg: FieldConfig, heads=RPV_HEADS):
    """Evaluate the network at points x of shape (N,3).

    Returns a dict with 'sigma' (N,) plus the requested reflectance heads:
    'rho0' (N,3) and 'k', 'theta', 'rhoc' (N,), range-scaled by their
    activations.  Parameter entries may be graph tensors; outputs then stay
    on the graph.  ``heads=()`` evaluates density only.
    """
    n_pts = ad.value_of(x).shape[0]
    pe = positional_encoding(x, cfg.pe_frequencies)
    h = pe
    for i in range(cfg.trunk_layers):
        if i == cfg.skip_at and i > 0:
            h = ad.concat([h, pe], axis=1)
        h = ad.relu(nn.linear(h, params[f"trunk{i}_w"], params[f"trunk{i}_b"]))
    out = {}
    sigma_raw = nn.linear(h, params["sigma_w"], params["sigma_b"])
    out["sigma"] = ad.softplus(ad.reshape(sigma_raw, (n_pts,)))
    if heads:
        feat = ad.relu(nn.linear(h, params["feat_w"], params["feat_b"]))
        if "rho0" in heads:
            out["rho0"] = ad.sigmoid(nn.linear(feat, params["rho0_w"], params["rho0_b"]))
        if "k" in heads:
            out["k"] = 2.0 * ad.sigmoid(
                ad.reshape(nn.linear(feat, params["k_w"], params["k_b"]), (n_pts,)))
        if "theta" in heads:
            out["theta"] = 2.0 * ad.sigmoid(
                ad.reshape(nn.linear(feat, params["theta_w"], params["theta_b"]), (n_pts,))) - 1.0
        if "rhoc" in heads:
            out["rhoc"] = ad.sigmoid(
                ad.reshape(nn.linear(feat, params["rhoc_w"], params["rhoc_b"]), (n_pts,)))
    return out


def density_gradients(params: dict[str, np.ndarray], x: np.ndarray,
                      cfg: FieldConfig) -> np.ndarray:
    """d sigma / d x at each point, shape (N,3).

    Each point's density depends only on its own row, so one backward pass
    through the sum of densities yields all per-point gradients at once.
    """
    g = ad.Graph()
    xt = g.tensor(np.asarray(x, dtype=float), param=True)
    sigma = forward(params, xt, cfg, heads=())["sigma"]
    grads = ad.backward(ad.tsum(sigma))
    return grads[xt.idx]


def analytic_normals(params: dict[str, np.ndarray], x: np.ndarray,
                     cfg: FieldConfig) -> tuple[np.ndarray, np.ndarray]:
    """Surface normals -grad(sigma)/|grad(sigma)| for points x (N,3).

    Returns (normals (N,3), degenerate mask (N,)).  Where the gradient norm
    falls below NORMAL_EPS the normal defaults to straight up and the mask
    is set.  These normals are treated as constants by the training loss.
    """
    grad = density_gradients(params, x, cfg)
    norms = np.linalg.norm(grad, axis=-1)
    degenerate = norms <= NORMAL_EPS
    safe = np.where(degenerate, 1.0, norms)
    n = -grad / safe[:, None]
    n[degenerate] = (0.0, 0.0, 1.0)
    return n, degenerate


class RadianceField:
    """Weights plus architecture, with convenience queries for single points."""

    def __init__(self, cfg: FieldConfig, params: dict[str, np.ndarray] | None = None):
        self.cfg = cfg
        self.params = init_params(cfg) if params is None else params

    def query(self, x) -> FieldSample:
        """Density and reflectance parameters at one point (no normal)."""
        pt = np.asarray(x, dtype=float).reshape(1, 3)
        out = forward(self.params, pt, self.cfg)
        return FieldSample(
            sigma=float(out["sigma"][0]),
            params=RpvParams(tuple(out["rho0"][0]), float(out["k"][0]),
                             float(out["theta"][0]), float(out["rhoc"][0])))

    def normal(self, x) -> tuple[np.ndarray, bool]:
        pt = np.asarray(x, dtype=float).reshape(1, 3)
        n, degenerate = analytic_normals(self.params, pt, self.cfg)
        return n[0], bool(degenerate[0])


def save_field(path, cfg: FieldConfig, params: dict[str, np.ndarray]) -> None:
    """Serialize config and weights to the flat binary checkpoint container."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<4Iq", cfg.trunk_layers, cfg.trunk_width,
                            cfg.pe_frequencies, cfg.skip_at, cfg.seed))
        f.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.asarray(params[name], dtype="<f8")
            enc = name.encode("utf-8")
            f.write(struct.pack("<I", len(enc)))
            f.write(enc)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def _take(buf: bytes, pos: int, n: int, path) -> tuple[bytes, int]:
    if pos + n > len(buf):
        raise CheckpointError(f"{path}: truncated at byte {len(buf)}, need {pos + n}")
    return buf[pos:pos + n], pos + n


def load_field(path) -> tuple[FieldConfig, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        buf = f.read()
    raw, pos = _take(buf, 0, 4, path)
    if raw != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a field checkpoint (magic {raw!r})")
    raw, pos = _take(buf, pos, 4, path)
    version = struct.unpack("<I", raw)[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    raw, pos = _take(buf, pos, 24, path)
    layers, width, pe, skip, seed = struct.unpack("<4Iq", raw)
    cfg = FieldConfig(trunk_layers=layers, trunk_width=width,
                      pe_frequencies=pe, skip_at=skip, seed=seed)
    raw, pos = _take(buf, pos, 4, path)
    count = struct.unpack("<I", raw)[0]
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, pos = _take(buf, pos, 4, path)
        nlen = struct.unpack("<I", raw)[0]
        raw, pos = _take(buf, pos, nlen, path)
        name = raw.decode("utf-8")
        raw, pos = _take(buf, pos, 4, path)
        rank = struct.unpack("<I", raw)[0]
        raw, pos = _take(buf, pos, 4 * rank, path)
        dims = struct.unpack(f"<{rank}I", raw)
        nbytes = int(np.prod(dims)) * 8 if rank else 8
        raw, pos = _take(buf, pos, nbytes, path)
        params[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    return cfg, params

"""Quantitative evaluation: PSNR, SSIM, DSM extraction from a trained
field, and mean altitude error against the ground-truth surface.

SSIM uses the standard 11x11 Gaussian window (sigma 1.5) with K1=0.01,
K2=0.03 at unit dynamic range, averaged over fully valid windows only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import field as field_mod
from . import render
from . import scene as scene_mod

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


class MetricError(ValueError):
    pass


def _check_shapes(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise MetricError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def psnr(a, b, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give the 99 dB cap.

    The cap keeps logs finite and is reported as-is, never hidden.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_shapes(a, b, "psnr")
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    value = 10.0 * np.log10(data_range * data_range / mse)
    return float(min(value, PSNR_CAP_DB))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (r / sigma) ** 2)
    k2 = np.outer(k, k)
    return k2 / k2.sum()


def _luminance(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        return img.mean(axis=2)
    if img.ndim == 2:
        return img
    raise MetricError(f"ssim: expected 2-D or 3-D image, got shape {img.shape}")


def _windowed_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    wins = np.lib.stride_tricks.sliding_window_view(img, kernel.shape)
    return np.einsum("ijkl,kl->ij", wins, kernel, optimize=True)


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean local structural similarity over valid (fully interior) windows.

    Colour images are reduced to their channel-mean luminance first.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_shapes(a, b, "ssim")
    x = _luminance(a)
    y = _luminance(b)
    if min(x.shape) < SSIM_WINDOW:
        raise MetricError(
            f"ssim: image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_x = _windowed_mean(x, kernel)
    mu_y = _windowed_mean(y, kernel)
    var_x = _windowed_mean(x * x, kernel) - mu_x * mu_x
    var_y = _windowed_mean(y * y, kernel) - mu_y * mu_y
    cov = _windowed_mean(x * y, kernel) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# DSM


@dataclass
class Dsm:
    """Altitudes (scene units) on a regular x/y lattice with a validity mask."""

    grid: np.ndarray
    valid: np.ndarray
    bounds: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.grid.shape != self.valid.shape:
            raise MetricError("dsm: grid and mask shapes differ")
        if not np.all(np.isfinite(self.grid[self.valid])):
            raise MetricError("dsm: non-finite altitude in a valid cell")


def dsm_from_heightfield(hf: scene_mod.Heightfield, resolution: int,
                         bounds=(-1.0, 1.0, -1.0, 1.0)) -> Dsm:
    """Ground-truth DSM sampled on the evaluation lattice (all cells valid)."""
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y1, y0, resolution)
    gx, gy = np.meshgrid(xs, ys)
    return Dsm(grid=hf.sample(gx, gy), valid=np.ones((resolution, resolution), bool),
               bounds=bounds)


def extract_dsm(rf: field_mod.RadianceField, transform: scene_mod.SceneTransform,
                resolution: int, bounds=(-1.0, 1.0, -1.0, 1.0),
                n_samples: int = 192, chunk: int = 256,
                zmin: float | None = None, zmax: float | None = None) -> Dsm:
    """Altitude map of the trained field: one nadir ray per lattice cell.

    Rays descend through the same altitude band the training rays sampled
    (``zmin``/``zmax`` in scene units plus the standard margin); outside it
    the field is unconstrained and would only add noise.  The expected
    termination depth converts back to scene altitude through the
    transform.  Cells whose ray accumulates almost no weight are masked
    invalid.
    """
    if resolution < 2:
        raise MetricError("extract_dsm: resolution must be >= 2")
    if zmin is None or zmax is None:
        zmin = float(transform.from_norm(np.array([0.0, 0.0, -0.8]))[2])
        zmax = float(transform.from_norm(np.array([0.0, 0.0, 0.8]))[2])
    margin = 0.15
    z_top_norm = float(transform.to_norm(np.array([0.0, 0.0, zmax + margin]))[2])
    z_bot_norm = float(transform.to_norm(np.array([0.0, 0.0, zmin - margin]))[2])
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y1, y0, resolution)
    gx, gy = np.meshgrid(xs, ys)
    origins_scene = np.stack([gx.reshape(-1), gy.reshape(-1),
                              np.zeros(resolution * resolution)], axis=1)
    origins = transform.to_norm(origins_scene)
    origins[:, 2] = z_top_norm
    direction = np.array([0.0, 0.0, -1.0])
    span = z_top_norm - z_bot_norm
    t = (np.arange(n_samples) + 0.5) / n_samples * span
    delta = np.full(n_samples, span / n_samples)
    n = origins.shape[0]
    depth = np.empty(n)
    acc = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        o = origins[lo:hi]
        rows = hi - lo
        tt = np.broadcast_to(t, (rows, n_samples))
        dd = np.broadcast_to(delta, (rows, n_samples))
        dirs = np.broadcast_to(direction, (rows, 3))
        # any sun works for a depth-only render; the colour is discarded
        out = render.render_batch(rf.params, rf.cfg, o, dirs, tt, dd,
                                  np.array([0.0, 0.0, 1.0]), lambertian=True)
        depth[lo:hi] = out["depth"]
        acc[lo:hi] = out["acc"]
    valid = (acc >= render.EMPTY_RAY_WEIGHT).reshape(resolution, resolution)
    # nadir ray: altitude = origin altitude minus the travelled scene length
    z_top_scene = zmax + margin
    altitude = z_top_scene - np.asarray(transform.length_from_norm(depth))
    grid = np.where(valid, altitude.reshape(resolution, resolution), 0.0)
    return Dsm(grid=grid, valid=valid, bounds=bounds)


def mae(dsm: Dsm, gt: Dsm) -> float:
    """Mean absolute altitude error over jointly valid cells (scene units)."""
    _check_shapes(dsm.grid, gt.grid, "mae")
    joint = dsm.valid & gt.valid
    if not joint.any():
        raise MetricError("mae: no jointly valid cells")
    return float(np.abs(dsm.grid[joint] - gt.grid[joint]).mean())


def joint_valid_fraction(dsm: Dsm, gt: Dsm) -> float:
    _check_shapes(dsm.grid, gt.grid, "valid_fraction")
    return float((dsm.valid & gt.valid).mean())


# ---------------------------------------------------------------------------
# view rendering and the evaluation report


def render_view(rf: field_mod.RadianceField, spec: scene_mod.ViewSpec,
                transform: scene_mod.SceneTransform, mode: str = "sur",
                n_samples: int = 192, chunk: int = 256,
                zmin: float | None = None, zmax: float | None = None):
    """Full image of one view from the field, deterministic midpoint sampling.

    Returns (image (H,W,3), depth (H,W) in scene units, acc (H,W)).
    """
    if zmin is None or zmax is None:
        zmin = float(transform.from_norm(np.array([0.0, 0.0, -0.8]))[2])
        zmax = float(transform.from_norm(np.array([0.0, 0.0, 0.8]))[2])
    origins_s, direction, t_near_s, t_far_s = scene_mod.view_rays(spec, zmin, zmax)
    origins = transform.to_norm(origins_s)
    t_near = np.asarray(transform.length_to_norm(t_near_s))
    t_far = np.asarray(transform.length_to_norm(t_far_s))
    sun = spec.sun
    n = origins.shape[0]
    image = np.empty((n, 3))
    depth = np.empty(n)
    acc = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        rows = hi - lo
        o = origins[lo:hi]
        dirs = np.broadcast_to(direction, (rows, 3))
        frac = (np.arange(n_samples) + 0.5) / n_samples
        span = (t_far[lo:hi] - t_near[lo:hi])[:, None]
        t = t_near[lo:hi][:, None] + frac[None, :] * span
        delta = np.broadcast_to(span / n_samples, t.shape)
        pts = render.sample_points(o, dirs, t).reshape(-1, 3)
        normals, _ = field_mod.analytic_normals(rf.params, pts, rf.cfg)
        out = render.render_batch(rf.params, rf.cfg, o, dirs, t, delta, sun,
                                  mode=mode, normals=normals.reshape(rows, -1, 3))
        image[lo:hi] = out["colour"]
        depth[lo:hi] = out["depth"]
        acc[lo:hi] = out["acc"]
    shape = (spec.height, spec.width)
    return (image.reshape(shape + (3,)),
            np.asarray(transform.length_from_norm(depth)).reshape(shape),
            acc.reshape(shape))


REPORT_HEADER = "name,psnr_db,ssim,mae,valid_fraction"


def write_report(path, rows: list[dict]) -> None:
    """Evaluation CSV; absent metrics become empty fields."""
    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", encoding="utf-8") as f:
        f.write(REPORT_HEADER + "\n")
        for r in rows:
            f.write(",".join([str(r["name"]), fmt(r.get("psnr_db")),
                              fmt(r.get("ssim")), fmt(r.get("mae")),
                              fmt(r.get("valid_fraction"))]) + "\n")


def read_report(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != REPORT_HEADER:
            raise MetricError(f"{path}: unexpected report header {header!r}")
        for line in f:
            name, p, s, m, v = line.rstrip("\n").split(",")
            rows.append({"name": name,
                         "psnr_db": float(p) if p else None,
                         "ssim": float(s) if s else None,
                         "mae": float(m) if m else None,
                         "valid_fraction": float(v) if v else None})
    return rows


def evaluate(rf: field_mod.RadianceField, ds: scene_mod.Dataset,
             mode: str = "sur", dsm_resolution: int = 64,
             n_samples: int = 192) -> list[dict]:
    """PSNR/SSIM per test view plus a DSM row, images clipped to [0,1]."""
    zmin = float(ds.meta.get("height_min", ds.gt_dsm.min()))
    zmax = float(ds.meta.get("height_max", ds.gt_dsm.max()))
    rows = []
    for view in ds.test_views:
        img, _, _ = render_view(rf, view.spec, ds.transform, mode=mode,
                                n_samples=n_samples, zmin=zmin, zmax=zmax)
        a = np.clip(img, 0.0, 1.0)
        b = np.clip(view.image, 0.0, 1.0)
        rows.append({"name": view.name, "psnr_db": psnr(a, b), "ssim": ssim(a, b)})
    dsm = extract_dsm(rf, ds.transform, dsm_resolution, n_samples=n_samples,
                      zmin=zmin, zmax=zmax)
    gt = Dsm(grid=ds.gt_dsm, valid=np.ones_like(ds.gt_dsm, dtype=bool))
    if gt.grid.shape != dsm.grid.shape:
        gt = Dsm(grid=scene_mod.resize_bilinear(ds.gt_dsm, dsm_resolution,
                                                dsm_resolution),
                 valid=np.ones((dsm_resolution, dsm_resolution), bool))
    rows.append({"name": "dsm", "mae": mae(dsm, gt),
                 "valid_fraction": joint_valid_fraction(dsm, gt)})
    return rows

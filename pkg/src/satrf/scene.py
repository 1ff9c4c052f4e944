"""Synthetic ground truth: fractal terrain, piecewise-constant reflectance
materials, orthographic satellite-style views, an exact ray-cast renderer,
and dataset (de)serialization.

The scene lives in right-handed scene units with x east, y north, z up.
Terrain occupies x,y in [-1,1]; outside that square the surface continues by
edge clamping, so every ray eventually intersects.  Views are parallel
projections: all rays of a view share one direction of travel (downward),
and per-pixel origins sit on a tilted plane above the terrain.

Depth values, both ground truth and priors, are ray parameters t in scene
units measured from the per-pixel origin.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import imgio
from . import rpv

DATASET_VERSION = 1
MIN_DZ = 0.2  # views must stay within ~78 degrees of nadir


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# terrain


@dataclass
class Heightfield:
    """Altitude grid over a rectangular extent; row 0 is the north edge."""

    grid: np.ndarray              # (H,W) altitudes
    extent: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 2 or min(self.grid.shape) < 2:
            raise ValueError("heightfield grid must be 2-D with dims >= 2")
        if not np.all(np.isfinite(self.grid)):
            raise ValueError("heightfield grid must be finite")

    def _to_cells(self, x, y):
        x0, x1, y0, y1 = self.extent
        h, w = self.grid.shape
        gx = np.clip((np.asarray(x) - x0) / (x1 - x0) * (w - 1), 0.0, w - 1.0)
        gy = np.clip((y1 - np.asarray(y)) / (y1 - y0) * (h - 1), 0.0, h - 1.0)
        return gx, gy

    def sample(self, x, y):
        """Bilinear altitude at (x, y); coordinates clamp to the extent."""
        gx, gy = self._to_cells(x, y)
        i0 = np.minimum(np.floor(gy).astype(int), self.grid.shape[0] - 2)
        j0 = np.minimum(np.floor(gx).astype(int), self.grid.shape[1] - 2)
        fy = gy - i0
        fx = gx - j0
        z00 = self.grid[i0, j0]
        z01 = self.grid[i0, j0 + 1]
        z10 = self.grid[i0 + 1, j0]
        z11 = self.grid[i0 + 1, j0 + 1]
        return (z00 * (1 - fy) * (1 - fx) + z01 * (1 - fy) * fx
                + z10 * fy * (1 - fx) + z11 * fy * fx)

    def gradient(self, x, y):
        """(dz/dx, dz/dy) of the bilinear surface; zero outside the extent."""
        x0, x1, y0, y1 = self.extent
        h, w = self.grid.shape
        gx, gy = self._to_cells(x, y)
        i0 = np.minimum(np.floor(gy).astype(int), h - 2)
        j0 = np.minimum(np.floor(gx).astype(int), w - 2)
        fy = gy - i0
        fx = gx - j0
        z00 = self.grid[i0, j0]
        z01 = self.grid[i0, j0 + 1]
        z10 = self.grid[i0 + 1, j0]
        z11 = self.grid[i0 + 1, j0 + 1]
        dz_dgx = (z01 - z00) * (1 - fy) + (z11 - z10) * fy
        dz_dgy = (z10 - z00) * (1 - fx) + (z11 - z01) * fx
        inside_x = (np.asarray(x) >= x0) & (np.asarray(x) <= x1)
        inside_y = (np.asarray(y) >= y0) & (np.asarray(y) <= y1)
        dz_dx = np.where(inside_x, dz_dgx * (w - 1) / (x1 - x0), 0.0)
        # grid row index grows southward, hence the sign flip
        dz_dy = np.where(inside_y, -dz_dgy * (h - 1) / (y1 - y0), 0.0)
        return dz_dx, dz_dy

    @property
    def zmin(self) -> float:
        return float(self.grid.min())

    @property
    def zmax(self) -> float:
        return float(self.grid.max())


def _smooth3(grid: np.ndarray) -> np.ndarray:
    p = np.pad(grid, ((1, 1), (0, 0)), mode="edge")
    g = 0.25 * p[:-2] + 0.5 * p[1:-1] + 0.25 * p[2:]
    p = np.pad(g, ((0, 0), (1, 1)), mode="edge")
    return 0.25 * p[:, :-2] + 0.5 * p[:, 1:-1] + 0.25 * p[:, 2:]


def generate_heightfield(seed: int, dims: int = 65, roughness: float = 0.5,
                         amplitude: float = 0.6, base: float = 0.05,
                         max_slope: float = 0.6) -> Heightfield:
    """Midpoint-displacement terrain on a dims x dims grid.

    Displacement magnitude starts at ``amplitude * roughness`` and shrinks
    by ``roughness`` per subdivision level; roughness 0 gives a flat plane.
    The grid is then binomially smoothed just until no facet is steeper
    than ``max_slope`` (keeping grazing reflectance geometry out of the
    ground truth) and shifted so its floor sits at altitude ``base``.  The
    realized height range therefore varies with seed and roughness.
    """
    if dims < 2:
        raise ValueError("dims must be >= 2")
    n = 1
    while n + 1 < dims:
        n *= 2
    size = n + 1
    rng = np.random.default_rng(seed)
    grid = np.zeros((size, size))
    step = n
    scale = amplitude * roughness
    while step > 1:
        half = step // 2
        # diamond pass
        for i in range(half, size, step):
            for j in range(half, size, step):
                avg = (grid[i - half, j - half] + grid[i - half, j + half]
                       + grid[i + half, j - half] + grid[i + half, j + half]) / 4.0
                grid[i, j] = avg + scale * rng.normal()
        # square pass
        for i in range(0, size, half):
            start = half if (i // half) % 2 == 0 else 0
            for j in range(start, size, step):
                total = 0.0
                count = 0
                for di, dj in ((-half, 0), (half, 0), (0, -half), (0, half)):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < size and 0 <= jj < size:
                        total += grid[ii, jj]
                        count += 1
                grid[i, j] = total / count + scale * rng.normal()
        step = half
        scale *= roughness
    grid = grid[:dims, :dims]

    def steepest(g):
        pitch_x = 2.0 / (g.shape[1] - 1)
        pitch_y = 2.0 / (g.shape[0] - 1)
        sx = np.abs(np.diff(g, axis=1)).max() / pitch_x
        sy = np.abs(np.diff(g, axis=0)).max() / pitch_y
        return max(sx, sy)

    for _ in range(200):
        if steepest(grid) <= max_slope:
            break
        grid = _smooth3(grid)
    return Heightfield(grid=grid - grid.min() + base)


# ---------------------------------------------------------------------------
# materials


@dataclass
class MaterialMap:
    """Piecewise-constant reflectance parameters over the terrain extent."""

    region_id: np.ndarray                     # (H,W) ints
    regions: list[rpv.RpvParams]
    extent: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)

    def __post_init__(self):
        self.region_id = np.asarray(self.region_id, dtype=int)
        if self.region_id.min() < 0 or self.region_id.max() >= len(self.regions):
            raise ValueError("region ids must index into the region list")

    def lookup_ids(self, x, y) -> np.ndarray:
        x0, x1, y0, y1 = self.extent
        h, w = self.region_id.shape
        j = np.clip(((np.asarray(x) - x0) / (x1 - x0) * w).astype(int), 0, w - 1)
        i = np.clip(((y1 - np.asarray(y)) / (y1 - y0) * h).astype(int), 0, h - 1)
        return self.region_id[i, j]

    def lookup(self, x: float, y: float) -> rpv.RpvParams:
        return self.regions[int(self.lookup_ids(x, y))]


def quadrant_materials(dims: int, regions: list[rpv.RpvParams]) -> MaterialMap:
    """Four-region map splitting the extent at x=0 and y=0."""
    if len(regions) != 4:
        raise ValueError("quadrant_materials expects exactly 4 parameter sets")
    ids = np.zeros((dims, dims), dtype=int)
    half = dims // 2
    ids[:half, half:] = 1   # north-east
    ids[half:, :half] = 2   # south-west
    ids[half:, half:] = 3   # south-east
    return MaterialMap(region_id=ids, regions=regions)


# ---------------------------------------------------------------------------
# views


@dataclass(frozen=True)
class ViewSpec:
    """A parallel projection plus the sun position used to light it."""

    name: str
    role: str                  # train | test
    zenith_deg: float          # of the direction toward the camera
    azimuth_deg: float
    width: int
    height: int
    extent: float              # half-width of the footprint, scene units
    z0: float                  # altitude of the origin-plane centre
    sun_zenith_deg: float
    sun_azimuth_deg: float

    def __post_init__(self):
        if self.role not in ("train", "test"):
            raise DatasetError(f"view role must be train|test, got {self.role!r}")
        d = self.to_camera
        if abs(d[2]) <= MIN_DZ:
            raise DatasetError(
                f"view {self.name!r}: |direction z| = {abs(d[2]):.3f} <= {MIN_DZ}")

    @property
    def to_camera(self) -> np.ndarray:
        """Unit vector from the surface toward the camera."""
        return rpv.direction_from_angles(np.radians(self.zenith_deg),
                                         np.radians(self.azimuth_deg))

    @property
    def sun(self) -> np.ndarray:
        return rpv.direction_from_angles(np.radians(self.sun_zenith_deg),
                                         np.radians(self.sun_azimuth_deg))

    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """In-plane axes (u right, v up-in-image), perpendicular to the view."""
        d = self.to_camera
        u = np.cross([0.0, 0.0, 1.0], d)
        nu = np.linalg.norm(u)
        u = np.array([1.0, 0.0, 0.0]) if nu < 1e-9 else u / nu
        v = np.cross(d, u)
        return u, v / np.linalg.norm(v)


def view_rays(spec: ViewSpec, zmin: float, zmax: float,
              margin: float = 0.15):
    """Per-pixel ray origins and shared direction for a parallel view.

    Rays travel along -to_camera.  t bounds are trimmed per ray so sampling
    starts just above the terrain ceiling and ends just below its floor.
    Returns (origins (N,3), direction (3,), t_near (N,), t_far (N,)).
    """
    d = spec.to_camera
    u, v = spec.basis()
    cols = (np.arange(spec.width) + 0.5) / spec.width * 2.0 * spec.extent - spec.extent
    rows = spec.extent - (np.arange(spec.height) + 0.5) / spec.height * 2.0 * spec.extent
    a, b = np.meshgrid(cols, rows)          # (H,W)
    centre = np.array([0.0, 0.0, spec.z0])
    origins = (centre[None, :] + a.reshape(-1, 1) * u[None, :]
               + b.reshape(-1, 1) * v[None, :])
    direction = -d
    dz = direction[2]                        # negative
    t_hi = (origins[:, 2] - (zmax + margin)) / (-dz)
    t_lo = (origins[:, 2] - (zmin - margin)) / (-dz)
    t_near = np.maximum(t_hi, 0.0)
    return origins, direction, t_near, t_lo


def oracle_render(hf: Heightfield, materials: MaterialMap, spec: ViewSpec,
                  coarse_steps: int = 96, bisect_iters: int = 60,
                  shade_fn=None):
    """Exact render of the terrain under the reflectance model.

    Marches every pixel ray to its first terrain crossing, refines by
    bisection to 1e-6 of the height range, and shades the hit with the true
    facet normal and per-region parameters.  Returns (image (H,W,3),
    depth (H,W) ray parameters, valid (H,W) bools).

    ``shade_fn`` defaults to the reflectance module's ``shade``; tests may
    substitute a spy.
    """
    if shade_fn is None:
        shade_fn = rpv.shade
    origins, direction, t_near, t_far = view_rays(spec, hf.zmin, hf.zmax)
    n_rays = origins.shape[0]
    height_range = max(hf.zmax - hf.zmin, 1e-9)
    tol = 1e-6 * height_range

    def above(t):
        p = origins + t[:, None] * direction[None, :]
        return p[:, 2] - hf.sample(p[:, 0], p[:, 1])

    # coarse march in lockstep; record the first sign change per ray
    lo = t_near.copy()
    hi = t_near.copy()
    found = np.zeros(n_rays, dtype=bool)
    f_prev = above(t_near)
    started_below = f_prev <= 0.0
    ts = np.linspace(0.0, 1.0, coarse_steps + 1)
    for s in ts[1:]:
        t_cur = t_near + s * (t_far - t_near)
        f_cur = above(t_cur)
        crossing = (~found) & (f_prev > 0.0) & (f_cur <= 0.0)
        lo = np.where(crossing, t_cur - (t_far - t_near) / coarse_steps, lo)
        hi = np.where(crossing, t_cur, hi)
        found |= crossing
        f_prev = f_cur
    found &= ~started_below

    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        f_mid = above(mid)
        go_low = f_mid > 0.0
        lo = np.where(found & go_low, mid, lo)
        hi = np.where(found & ~go_low, mid, hi)
        if np.all(hi - lo < tol):
            break
    t_hit = 0.5 * (lo + hi)

    hits = origins + t_hit[:, None] * direction[None, :]
    gxs, gys = hf.gradient(hits[:, 0], hits[:, 1])
    region_ids = materials.lookup_ids(hits[:, 0], hits[:, 1])
    sun = spec.sun
    w_r = spec.to_camera
    image = np.zeros((n_rays, 3))
    for i in range(n_rays):
        if not found[i]:
            continue
        n = rpv.normalize([-gxs[i], -gys[i], 1.0])
        params = materials.regions[int(region_ids[i])]
        try:
            image[i] = shade_fn(params, n, sun, w_r)
        except rpv.GeometryError:
            # grazing facet: fall back to the flat normal rather than dropping
            image[i] = shade_fn(params, rpv.FLAT_NORMAL, sun, w_r)
    shape = (spec.height, spec.width)
    depth = np.where(found, t_hit, 0.0).reshape(shape)
    return image.reshape(shape + (3,)), depth, found.reshape(shape)


# ---------------------------------------------------------------------------
# depth priors


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize treating samples as pixel centres."""
    in_h, in_w = arr.shape[:2]
    ys = (np.arange(out_h) + 0.5) / out_h * in_h - 0.5
    xs = (np.arange(out_w) + 0.5) / out_w * in_w - 0.5
    ys = np.clip(ys, 0, in_h - 1)
    xs = np.clip(xs, 0, in_w - 1)
    y0 = np.minimum(np.floor(ys).astype(int), in_h - 2) if in_h > 1 else np.zeros(out_h, int)
    x0 = np.minimum(np.floor(xs).astype(int), in_w - 2) if in_w > 1 else np.zeros(out_w, int)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = arr[np.ix_(y0, x0)]
    b = arr[np.ix_(y0, np.minimum(x0 + 1, in_w - 1))]
    c = arr[np.ix_(np.minimum(y0 + 1, in_h - 1), x0)]
    d = arr[np.ix_(np.minimum(y0 + 1, in_h - 1), np.minimum(x0 + 1, in_w - 1))]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx


def _detrend_plane(arr: np.ndarray) -> np.ndarray:
    """Residual after removing the least-squares plane a + b*col + c*row."""
    h, w = arr.shape
    rows, cols = np.mgrid[0:h, 0:w]
    basis = np.column_stack([np.ones(h * w), cols.reshape(-1), rows.reshape(-1)])
    coef, *_ = np.linalg.lstsq(basis, arr.reshape(-1), rcond=None)
    return arr - (basis @ coef).reshape(h, w)


def degrade_depth(gt_depth: np.ndarray, downsample: int, noise_sigma: float,
                  corr_scale: float, seed: int, pixel_pitch: float = 1.0):
    """Low-resolution noisy prior plus a ruggedness-based confidence map.

    Block-averages the ground-truth depth and adds Gaussian noise.
    Confidence is exp(-|gradient|/corr_scale) of the degraded map after
    removing its best-fit plane (an oblique parallel view of even flat
    ground has a uniform depth ramp that says nothing about terrain
    difficulty), clipped to [0.1, 0.99].  ``pixel_pitch`` converts cell
    steps to scene units for the gradient.  Returns (dbar, corr) at the
    reduced resolution.
    """
    if downsample < 1:
        raise ValueError("downsample factor must be >= 1")
    h, w = gt_depth.shape
    if h % downsample or w % downsample:
        raise ValueError(f"dims {h}x{w} not divisible by factor {downsample}")
    lh, lw = h // downsample, w // downsample
    blocks = gt_depth.reshape(lh, downsample, lw, downsample)
    dbar = blocks.mean(axis=(1, 3))
    rng = np.random.default_rng(seed)
    dbar = dbar + noise_sigma * rng.standard_normal(dbar.shape)
    step = pixel_pitch * downsample
    gy, gx = np.gradient(_detrend_plane(dbar), step)
    corr = np.exp(-np.hypot(gx, gy) / corr_scale)
    return dbar, np.clip(corr, 0.1, 0.99)


# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class SceneTransform:
    """Isotropic map between scene units and the field's [-1,1] coordinates."""

    center: tuple[float, float, float]
    scale: float

    def to_norm(self, p: np.ndarray) -> np.ndarray:
        return (np.asarray(p, dtype=float) - np.asarray(self.center)) * self.scale

    def from_norm(self, p: np.ndarray) -> np.ndarray:
        return np.asarray(p, dtype=float) / self.scale + np.asarray(self.center)

    def length_to_norm(self, t):
        return np.asarray(t, dtype=float) * self.scale

    def length_from_norm(self, t):
        return np.asarray(t, dtype=float) / self.scale


@dataclass
class View:
    spec: ViewSpec
    image: np.ndarray                      # (H,W,3) linear [0,1]
    prior_dbar: np.ndarray | None = None   # low-res ray-parameter depths
    prior_corr: np.ndarray | None = None
    gt_depth: np.ndarray | None = None     # full-res, generation only
    gt_valid: np.ndarray | None = None

    @property
    def name(self) -> str:
        return self.spec.name


@dataclass
class Dataset:
    views: list[View]                      # training views
    test_views: list[View]
    transform: SceneTransform
    gt_dsm: np.ndarray                     # (H,W) altitudes over [-1,1]^2
    gt_rho0: np.ndarray                    # (H,W,3)
    gt_ktr: np.ndarray                     # (H,W,3): k, theta, rhoc
    meta: dict

    def all_views(self) -> list[View]:
        return list(self.views) + list(self.test_views)

    def validate(self):
        for view in self.views:
            if view.prior_dbar is None or view.prior_corr is None:
                raise DatasetError(f"training view {view.name!r} lacks a depth prior")
        for view in self.all_views():
            if view.prior_corr is not None:
                c = view.prior_corr
                if np.any(c < 0.0) or np.any(c > 1.0):
                    raise DatasetError(f"view {view.name!r}: corr outside [0,1]")
            sun = view.spec.sun
            if abs(np.linalg.norm(sun) - 1.0) > 1e-9:
                raise DatasetError(f"view {view.name!r}: sun direction not unit")
        return self


DEFAULT_REGIONS = [
    rpv.RpvParams((0.45, 0.32, 0.18), k=0.6, theta=-0.3, rhoc=0.90),
    rpv.RpvParams((0.12, 0.35, 0.10), k=1.4, theta=0.3, rhoc=0.80),
    rpv.RpvParams((0.35, 0.33, 0.30), k=1.4, theta=-0.3, rhoc=0.85),
    rpv.RpvParams((0.50, 0.45, 0.38), k=0.6, theta=0.3, rhoc=0.75),
]

TRAIN_VIEW_ANGLES = [(8.0, 30.0), (12.0, 150.0), (10.0, 270.0), (9.0, 60.0)]
TEST_VIEW_ANGLES = {"easy": (6.0, 90.0), "hard": (25.0, 200.0), "vhard": (40.0, 330.0)}


def gen_scene(seed: int = 0, dims: int = 64, roughness: float = 0.55,
              n_views: int = 3, noise_sigma: float = 0.015,
              downsample: int = 4, corr_scale: float = 30.0,
              sun_zenith_deg: float = 40.0, sun_azimuth_deg: float = 135.0,
              extent: float = 1.3, z0: float = 2.5,
              regions: list[rpv.RpvParams] | None = None) -> Dataset:
    """Build the full synthetic dataset: terrain, materials, views, priors.

    Training views sit near nadir at spread azimuths; the three test views
    offer interpolation (easy) and increasing extrapolation (hard, vhard).
    The default ``corr_scale`` keeps ``1 - corr`` comparable to the prior's
    actual error (noise plus block-averaging curvature) on slope-capped
    terrain, so depth supervision is released only once the field is within
    the prior's own accuracy.
    """
    if not 1 <= n_views <= len(TRAIN_VIEW_ANGLES):
        raise ValueError(f"n_views must be in [1, {len(TRAIN_VIEW_ANGLES)}]")
    regions = DEFAULT_REGIONS if regions is None else regions
    hf = generate_heightfield(seed, dims=max(dims + 1, 65), roughness=roughness)
    materials = quadrant_materials(dims, regions)

    def make_spec(name, role, zen, az):
        return ViewSpec(name=name, role=role, zenith_deg=zen, azimuth_deg=az,
                        width=dims, height=dims, extent=extent, z0=z0,
                        sun_zenith_deg=sun_zenith_deg,
                        sun_azimuth_deg=sun_azimuth_deg)

    views: list[View] = []
    pitch = 2.0 * extent / dims
    for i in range(n_views):
        zen, az = TRAIN_VIEW_ANGLES[i]
        spec = make_spec(f"train_{i}", "train", zen, az)
        image, depth, valid = oracle_render(hf, materials, spec)
        dbar, corr = degrade_depth(depth, downsample, noise_sigma, corr_scale,
                                   seed=seed * 1000 + 17 + i, pixel_pitch=pitch)
        views.append(View(spec=spec, image=image, prior_dbar=dbar,
                          prior_corr=corr, gt_depth=depth, gt_valid=valid))
    test_views: list[View] = []
    for scen, (zen, az) in TEST_VIEW_ANGLES.items():
        spec = make_spec(scen, "test", zen, az)
        image, depth, valid = oracle_render(hf, materials, spec)
        test_views.append(View(spec=spec, image=image, gt_depth=depth, gt_valid=valid))

    xs = np.linspace(-1.0, 1.0, dims)
    ys = np.linspace(1.0, -1.0, dims)
    gx, gy = np.meshgrid(xs, ys)
    gt_dsm = hf.sample(gx, gy)
    ids = materials.lookup_ids(gx, gy)
    gt_rho0 = np.stack([np.asarray(regions[i].rho0) for i in ids.reshape(-1)]
                       ).reshape(dims, dims, 3)
    gt_ktr = np.stack([(regions[i].k, regions[i].theta, regions[i].rhoc)
                       for i in ids.reshape(-1)]).reshape(dims, dims, 3)

    zmid = 0.5 * (hf.zmin + hf.zmax)
    span = max(extent + 0.15, (hf.zmax - hf.zmin) / 2 + 0.1)
    transform = SceneTransform(center=(0.0, 0.0, zmid), scale=1.0 / span)
    meta = dict(seed=seed, dims=dims, roughness=roughness,
                noise_sigma=noise_sigma, downsample=downsample,
                corr_scale=corr_scale, height_min=hf.zmin, height_max=hf.zmax)
    return Dataset(views=views, test_views=test_views, transform=transform,
                   gt_dsm=gt_dsm, gt_rho0=gt_rho0, gt_ktr=gt_ktr, meta=meta).validate()


def save_dataset(ds: Dataset, path) -> None:
    """Write the dataset directory: meta.txt plus PFM/PPM payloads."""
    os.makedirs(path, exist_ok=True)
    meta: dict = {"format_version": DATASET_VERSION}
    for key in ("seed", "dims", "roughness", "noise_sigma", "downsample",
                "corr_scale", "height_min", "height_max"):
        if key in ds.meta:
            meta[key] = ds.meta[key]
    meta["transform_center"] = ",".join(f"{c!r}" for c in ds.transform.center)
    meta["transform_scale"] = repr(ds.transform.scale)
    all_views = ds.all_views()
    meta["n_views"] = len(all_views)
    for idx, view in enumerate(all_views):
        s = view.spec
        meta[f"view_{idx}_name"] = s.name
        meta[f"view_{idx}_role"] = s.role
        meta[f"view_{idx}_zenith_deg"] = repr(s.zenith_deg)
        meta[f"view_{idx}_azimuth_deg"] = repr(s.azimuth_deg)
        meta[f"view_{idx}_width"] = s.width
        meta[f"view_{idx}_height"] = s.height
        meta[f"view_{idx}_extent"] = repr(s.extent)
        meta[f"view_{idx}_z0"] = repr(s.z0)
        meta[f"view_{idx}_sun_zenith_deg"] = repr(s.sun_zenith_deg)
        meta[f"view_{idx}_sun_azimuth_deg"] = repr(s.sun_azimuth_deg)
        imgio.write_pfm(os.path.join(path, f"view_{idx}.pfm"), view.image)
        imgio.write_ppm(os.path.join(path, f"view_{idx}_preview.ppm"), view.image)
        if s.role == "train":
            imgio.write_pfm(os.path.join(path, f"depth_{idx}.pfm"), view.prior_dbar)
            imgio.write_pfm(os.path.join(path, f"corr_{idx}.pfm"), view.prior_corr)
    imgio.write_pfm(os.path.join(path, "gt_dsm.pfm"), ds.gt_dsm)
    imgio.write_pfm(os.path.join(path, "gt_materials_rho0.pfm"), ds.gt_rho0)
    imgio.write_pfm(os.path.join(path, "gt_materials_ktr.pfm"), ds.gt_ktr)
    imgio.write_kv(os.path.join(path, "meta.txt"), meta)


def load_dataset(path) -> Dataset:
    """Read a dataset directory back; priors are kept at their stored
    resolution (training upsamples on demand)."""
    meta_path = os.path.join(path, "meta.txt")
    if not os.path.exists(meta_path):
        raise DatasetError(f"{meta_path}: missing")
    raw = imgio.read_kv(meta_path)
    version = int(raw.get("format_version", "-1"))
    if version != DATASET_VERSION:
        raise DatasetError(f"{meta_path}: unsupported version {version}")
    center = tuple(float(v) for v in raw["transform_center"].split(","))
    transform = SceneTransform(center=center, scale=float(raw["transform_scale"]))
    views: list[View] = []
    test_views: list[View] = []
    for idx in range(int(raw["n_views"])):
        def key(suffix):
            return raw[f"view_{idx}_{suffix}"]
        spec = ViewSpec(name=key("name"), role=key("role"),
                        zenith_deg=float(key("zenith_deg")),
                        azimuth_deg=float(key("azimuth_deg")),
                        width=int(key("width")), height=int(key("height")),
                        extent=float(key("extent")), z0=float(key("z0")),
                        sun_zenith_deg=float(key("sun_zenith_deg")),
                        sun_azimuth_deg=float(key("sun_azimuth_deg")))
        image = imgio.read_pfm(os.path.join(path, f"view_{idx}.pfm"))
        view = View(spec=spec, image=image)
        if spec.role == "train":
            dpath = os.path.join(path, f"depth_{idx}.pfm")
            cpath = os.path.join(path, f"corr_{idx}.pfm")
            if not os.path.exists(dpath) or not os.path.exists(cpath):
                raise DatasetError(f"training view {spec.name!r}: missing prior files")
            view.prior_dbar = imgio.read_pfm(dpath)
            view.prior_corr = imgio.read_pfm(cpath)
            views.append(view)
        else:
            test_views.append(view)
    ds = Dataset(views=views, test_views=test_views, transform=transform,
                 gt_dsm=imgio.read_pfm(os.path.join(path, "gt_dsm.pfm")),
                 gt_rho0=imgio.read_pfm(os.path.join(path, "gt_materials_rho0.pfm")),
                 gt_ktr=imgio.read_pfm(os.path.join(path, "gt_materials_ktr.pfm")),
                 meta={k: v for k, v in raw.items()})
    return ds.validate()

"""Ray sampling, alpha compositing, and the two reflectance rendering modes.

Compositing follows the classic weight formulation: alpha_i = 1 - exp(-sigma_i
delta_i), T_i the running transmittance, w_i = T_i alpha_i.  Transmittance is
computed as exp of the negated exclusive cumulative sum of sigma*delta, which
is algebraically identical to the product of (1 - alpha_j) and keeps the whole
chain differentiable with a single cumsum primitive.

Surface mode accumulates reflectance parameters and the normal along the ray
and shades once; volume mode shades every sample and accumulates colours.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import field as field_mod
from . import rpv

EMPTY_RAY_WEIGHT = 1e-6


@dataclass(frozen=True)
class Ray:
    """Origin, unit direction of travel, and the sampled parameter range."""

    o: np.ndarray
    w_r: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        object.__setattr__(self, "o", np.asarray(self.o, dtype=float))
        object.__setattr__(self, "w_r", rpv.unit(self.w_r))
        if not self.t_near < self.t_far:
            raise ValueError(f"require t_near < t_far, got {self.t_near}, {self.t_far}")

    def at(self, t):
        return self.o + np.multiply.outer(t, self.w_r)


@dataclass(frozen=True)
class SampleSet:
    """Strictly ascending sample parameters with positive inter-sample deltas.

    The last delta closes the set against t_far.  Construction nudges ties
    apart by a relative epsilon, so positions may exceed the stated bounds by
    at most that spacing.
    """

    t: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        d = np.asarray(self.delta, dtype=float)
        if t.shape != d.shape or t.ndim != 1:
            raise ValueError("t and delta must be 1-D and equally sized")
        if t.size and (np.any(np.diff(t) <= 0) or np.any(d <= 0)):
            raise ValueError("sample positions must be strictly ascending, deltas positive")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "delta", d)


def _strictify(t_sorted: np.ndarray, t_near: float, t_far: float) -> np.ndarray:
    eps = max(t_far - t_near, 1.0) * 1e-12
    return t_sorted + np.arange(t_sorted.shape[-1]) * eps


def _deltas(t: np.ndarray, t_far: float) -> np.ndarray:
    eps = max(abs(t_far), 1.0) * 1e-12
    last = np.maximum(t_far - t[..., -1:], eps)
    return np.concatenate([np.diff(t, axis=-1), last], axis=-1)


def make_sample_set(t_raw: np.ndarray, t_near: float, t_far: float) -> SampleSet:
    t = _strictify(np.sort(t_raw), t_near, t_far)
    return SampleSet(t=t, delta=_deltas(t, t_far))


def stratified_samples(ray: Ray, n: int, rng: np.random.Generator) -> SampleSet:
    """One uniform draw in each of n equal-width bins of [t_near, t_far]."""
    if n < 1:
        raise ValueError("need at least one sample")
    edges = np.linspace(ray.t_near, ray.t_far, n + 1)
    t = edges[:-1] + rng.random(n) * np.diff(edges)
    return make_sample_set(t, ray.t_near, ray.t_far)


def guided_samples(ray: Ray, depth_prior: float, sigma_g: float, n: int,
                   rng: np.random.Generator,
                   companion: SampleSet | None = None) -> tuple[SampleSet, bool]:
    """Gaussian draws around a depth prior, merged with an optional companion.

    Returns (samples, fell_back).  A prior outside the ray bounds falls back
    to stratified sampling and sets the flag.
    """
    if not ray.t_near <= depth_prior <= ray.t_far:
        base = stratified_samples(ray, n, rng)
        t = base.t if companion is None else np.concatenate([companion.t, base.t])
        return make_sample_set(t, ray.t_near, ray.t_far), True
    draws = depth_prior + sigma_g * rng.standard_normal(n)
    draws = np.clip(draws, ray.t_near, ray.t_far)
    t = draws if companion is None else np.concatenate([companion.t, draws])
    return make_sample_set(t, ray.t_near, ray.t_far), False


@dataclass
class CompositeWeights:
    """Per-sample opacity, transmittance and compositing weights.

    Entries are tensors when built from a graph-attached density.
    """

    alpha: object
    transmittance: object
    w: object

    @property
    def residual(self) -> np.ndarray:
        """Transmittance left after the last sample: T_{N+1}."""
        a = ad.value_of(self.alpha)
        t = ad.value_of(self.transmittance)
        return t[..., -1] * (1.0 - a[..., -1])

    @property
    def accumulated(self) -> np.ndarray:
        return ad.value_of(self.w).sum(axis=-1)


def composite_weights(sigma, delta) -> CompositeWeights:
    """Eq-style compositing along the last axis; works batched."""
    sigma_v = ad.value_of(sigma)
    delta_v = np.asarray(delta, dtype=float)
    if np.any(sigma_v < 0):
        raise ad.DomainError("composite_weights: negative density")
    if np.any(delta_v <= 0):
        raise ValueError("composite_weights: deltas must be positive")
    tau = sigma * delta
    alpha = 1.0 - ad.exp(-tau)
    inclusive = ad.cumsum(tau, axis=-1)
    transmittance = ad.exp(tau - inclusive)  # exp(-exclusive cumsum)
    w = transmittance * alpha
    return CompositeWeights(alpha=alpha, transmittance=transmittance, w=w)


def render_depth(weights: CompositeWeights, t):
    """Expected termination depth sum(w_i t_i); empty rays give 0."""
    return ad.tsum(weights.w * t, axis=-1)


def depth_std(weights: CompositeWeights, t, depth) -> np.ndarray:
    """S(r) with S^2 = sum w_i (t_i - D)^2, detached from any graph."""
    w = ad.value_of(weights.w)
    d = ad.value_of(depth)
    spread = (np.asarray(t) - d[..., None]) ** 2
    return np.sqrt(np.maximum((w * spread).sum(axis=-1), 0.0))


def _up_directions(w_r_batch: np.ndarray) -> np.ndarray:
    # ray directions travel into the scene; shading wants surface-to-camera
    return -w_r_batch


def sample_points(origins: np.ndarray, dirs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """World positions of (R,S) samples along R rays."""
    return origins[:, None, :] + t[..., None] * dirs[:, None, :]


def render_batch(params, cfg: field_mod.FieldConfig, origins: np.ndarray,
                 dirs: np.ndarray, t: np.ndarray, delta: np.ndarray,
                 sun: np.ndarray, mode: str = "sur", lambertian: bool = False,
                 normals: np.ndarray | None = None) -> dict:
    """Render R rays with S samples each; the core path shared by training
    and inference.

    ``params`` may hold tensors (training) or plain arrays (inference).
    ``t``/``delta`` are (R,S); ``dirs`` are directions of travel (into the
    scene); ``normals`` is (R,S,3) of precomputed analytic normals, or None
    for flat-up.  In lambertian mode the colour is the cosine-weighted
    accumulated pseudo-albedo and the anisotropy heads are never evaluated.

    Returns a dict: colour (R,3), depth (R,), weights, acc (R,), empty mask,
    and the count of degenerate accumulated normals.
    """
    if mode not in ("sur", "vol"):
        raise ValueError(f"unknown render mode {mode!r}")
    n_rays, n_samples = t.shape
    sun = rpv.unit(sun)
    cos_ir = abs(float(np.dot(sun, rpv.FLAT_NORMAL)))
    pts = sample_points(origins, dirs, t).reshape(-1, 3)
    heads = ("rho0",) if lambertian else field_mod.RPV_HEADS
    out = field_mod.forward(params, pts, cfg, heads=heads)
    sigma = ad.reshape(out["sigma"], (n_rays, n_samples))
    cw = composite_weights(sigma, delta)
    w = cw.w
    depth = render_depth(cw, t)
    acc = cw.accumulated
    empty = acc < EMPTY_RAY_WEIGHT
    degenerate_normals = 0

    rho0 = ad.reshape(out["rho0"], (n_rays, n_samples, 3))
    w3 = ad.reshape(w, (n_rays, n_samples, 1))
    if lambertian:
        colour = cos_ir * ad.tsum(w3 * rho0, axis=1)
        return dict(colour=colour, depth=depth, weights=cw, acc=acc, empty=empty,
                    degenerate_normals=0)

    if normals is None:
        normals = np.broadcast_to(rpv.FLAT_NORMAL, (n_rays, n_samples, 3))
    k = ad.reshape(out["k"], (n_rays, n_samples))
    theta = ad.reshape(out["theta"], (n_rays, n_samples))
    rhoc = ad.reshape(out["rhoc"], (n_rays, n_samples))
    to_cam = -dirs

    if mode == "sur":
        # accumulate parameters and the raw normal, then shade once per ray
        p_rho0 = ad.tsum(w3 * rho0, axis=1)
        p_k = ad.tsum(w * k, axis=-1)
        p_theta = ad.tsum(w * theta, axis=-1)
        p_rhoc = ad.tsum(w * rhoc, axis=-1)
        n_acc = (ad.value_of(w)[..., None] * normals).sum(axis=1)
        norms = np.linalg.norm(n_acc, axis=-1)
        bad = norms <= field_mod.NORMAL_EPS
        degenerate_normals = int(bad.sum())
        n_bar = np.where(bad[:, None], rpv.FLAT_NORMAL, n_acc / np.maximum(norms, 1e-300)[:, None])
        ti, tr, phi, g = rpv.capped_angles(n_bar, sun[None, :], to_cam)
        fac = rpv.angular_factor(ti, tr, phi, g, p_k, p_theta, p_rhoc)
        colour = p_rho0 * ad.reshape(cos_ir * fac, (n_rays, 1))
    else:
        # shade every sample, then composite the colours
        ti, tr, phi, g = rpv.capped_angles(normals, sun[None, None, :], to_cam[:, None, :])
        fac = rpv.angular_factor(ti, tr, phi, g, k, theta, rhoc)
        shaded = rho0 * ad.reshape(cos_ir * fac, (n_rays, n_samples, 1))
        colour = ad.tsum(w3 * shaded, axis=1)

    return dict(colour=colour, depth=depth, weights=cw, acc=acc, empty=empty,
                degenerate_normals=degenerate_normals)


def _single_ray_batch(field, ray: Ray, samples: SampleSet, sun, mode: str,
                      lambertian: bool = False) -> dict:
    t = samples.t[None, :]
    delta = samples.delta[None, :]
    normals = None
    if not lambertian:
        pts = sample_points(ray.o[None, :], ray.w_r[None, :], t).reshape(-1, 3)
        n, _ = field_mod.analytic_normals(field.params, pts, field.cfg)
        normals = n.reshape(1, -1, 3)
    return render_batch(field.params, field.cfg, ray.o[None, :], ray.w_r[None, :],
                        t, delta, sun, mode=mode, lambertian=lambertian,
                        normals=normals)


def render_color_surface(field, ray: Ray, samples: SampleSet, sun) -> np.ndarray:
    """Surface-mode colour for one ray: accumulate parameters, shade once.

    Empty rays come back black; a degenerate accumulated normal falls back
    to straight up.
    """
    return _single_ray_batch(field, ray, samples, sun, "sur")["colour"][0]


def render_color_volume(field, ray: Ray, samples: SampleSet, sun) -> np.ndarray:
    """Volume-mode colour for one ray: shade each sample, composite colours."""
    return _single_ray_batch(field, ray, samples, sun, "vol")["colour"][0]

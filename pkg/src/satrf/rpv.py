"""The RPV (Rahman-Pinty-Verstraete) semi-empirical reflectance model.

Reflectance factors as a product of a pseudo-albedo ``rho0``, a modified
Minnaert function (anisotropy ``k``), a Henyey-Greenstein phase function
(asymmetry ``theta``) and a hotspot term (``rhoc``).  All angular
sub-functions accept scalars or numpy arrays; the parameter arguments may
additionally be autodiff tensors, so the same formulas serve both direct
evaluation and training.

Conventions: x is east, y is north, z is up.  Azimuths are measured from
east, counterclockwise.  ``w_ir`` and ``w_r`` point away from the surface,
toward the sun and the camera.  Relative azimuth is measured sun-to-view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

ZENITH_CAP_DEG = 89.5
# cos of the zenith cap; evaluators clamp cosines here instead of hitting
# the Minnaert singularity at 90 degrees
COS_ZENITH_FLOOR = float(np.cos(np.radians(ZENITH_CAP_DEG)))

FLAT_NORMAL = np.array([0.0, 0.0, 1.0])


class GeometryError(ValueError):
    """A direction points below the local surface plane."""


@dataclass(frozen=True)
class RpvParams:
    """Per-point RPV parameters; ranges are validated at construction."""

    rho0: tuple[float, float, float]
    k: float = 1.0
    theta: float = 0.0
    rhoc: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.rho0, dtype=float)
        if r.shape != (3,):
            raise ValueError(f"rho0 must have 3 channels, got shape {r.shape}")
        if np.any(r < 0.0) or np.any(r > 1.0):
            raise ValueError(f"rho0 out of [0,1]: {self.rho0}")
        if not 0.0 <= self.k <= 2.0:
            raise ValueError(f"k out of [0,2]: {self.k}")
        if not -1.0 <= self.theta <= 1.0:
            raise ValueError(f"theta out of [-1,1]: {self.theta}")
        if not 0.0 <= self.rhoc <= 1.0:
            raise ValueError(f"rhoc out of [0,1]: {self.rhoc}")
        object.__setattr__(self, "rho0", tuple(float(c) for c in r))

    @property
    def rho0_array(self) -> np.ndarray:
        return np.asarray(self.rho0, dtype=float)


@dataclass(frozen=True)
class AngleConfig:
    """Zeniths, relative azimuth and phase angle, all in radians."""

    theta_ir: float
    theta_r: float
    phi: float
    g: float


def unit(v) -> np.ndarray:
    """Validate and return a unit 3-vector."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"direction must be a 3-vector, got shape {v.shape}")
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"direction norm {n} deviates from 1 by more than 1e-9")
    return v


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def direction_from_angles(zenith_rad: float, azimuth_rad: float) -> np.ndarray:
    """Unit vector at the given zenith (from +z) and azimuth (from east, CCW)."""
    sz = np.sin(zenith_rad)
    return np.array([sz * np.cos(azimuth_rad), sz * np.sin(azimuth_rad),
                     np.cos(zenith_rad)])


def angles_from_directions(n, w_ir, w_r) -> AngleConfig:
    """Decompose a (normal, sun, view) triple into RPV angles.

    Zeniths come from dot products with the normal and are capped at
    89.5 degrees.  The relative azimuth is recovered from the spherical law
    of cosines, which gives the angle between the azimuthal projections of
    the two directions onto the plane perpendicular to ``n``, in [0, pi].
    """
    n = unit(n)
    w_ir = unit(w_ir)
    w_r = unit(w_r)
    di = float(np.dot(w_ir, n))
    dr = float(np.dot(w_r, n))
    if di <= 0.0:
        raise GeometryError(f"illumination direction below surface plane (dot={di:.4g})")
    if dr <= 0.0:
        raise GeometryError(f"viewing direction below surface plane (dot={dr:.4g})")
    cos_ti = min(max(di, COS_ZENITH_FLOOR), 1.0)
    cos_tr = min(max(dr, COS_ZENITH_FLOOR), 1.0)
    theta_ir = float(np.arccos(cos_ti))
    theta_r = float(np.arccos(cos_tr))
    cos_g = float(np.clip(np.dot(w_ir, w_r), -1.0, 1.0))
    g = float(np.arccos(cos_g))
    s = np.sin(theta_ir) * np.sin(theta_r)
    if s < 1e-12:
        phi = 0.0
    else:
        cos_phi = (cos_g - cos_ti * cos_tr) / s
        phi = float(np.arccos(np.clip(cos_phi, -1.0, 1.0)))
    return AngleConfig(theta_ir=theta_ir, theta_r=theta_r, phi=phi, g=g)


def capped_angles(n: np.ndarray, w_ir: np.ndarray, w_r: np.ndarray):
    """Batched angle decomposition with grazing clamps instead of errors.

    Inputs broadcast as (..., 3).  Back-facing or grazing configurations are
    clamped to the 89.5-degree cap, which keeps the model finite when an
    estimated normal momentarily points the wrong way during optimization.
    Returns (theta_ir, theta_r, phi, g) arrays.
    """
    cos_ti = np.clip(np.sum(n * w_ir, axis=-1), COS_ZENITH_FLOOR, 1.0)
    cos_tr = np.clip(np.sum(n * w_r, axis=-1), COS_ZENITH_FLOOR, 1.0)
    cos_g = np.clip(np.sum(w_ir * w_r, axis=-1), -1.0, 1.0)
    theta_ir = np.arccos(cos_ti)
    theta_r = np.arccos(cos_tr)
    g = np.arccos(cos_g)
    s = np.sin(theta_ir) * np.sin(theta_r)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_phi = np.where(s < 1e-12, 1.0, (cos_g - cos_ti * cos_tr) / np.maximum(s, 1e-300))
    phi = np.arccos(np.clip(cos_phi, -1.0, 1.0))
    return theta_ir, theta_r, phi, g


def minnaert(theta_ir, theta_r, k):
    """Modified Minnaert factor (cos_ti * cos_tr * (cos_ti + cos_tr))^(k-1)."""
    cos_ti = np.cos(theta_ir)
    cos_tr = np.cos(theta_r)
    if np.any(cos_ti <= 1e-12) or np.any(cos_tr <= 1e-12):
        raise ad.DomainError("minnaert: zenith at or beyond 90 degrees")
    base = cos_ti * cos_tr * (cos_ti + cos_tr)
    # base ** (k - 1) written via exp/log so k may be a tensor
    return ad.exp((k - 1.0) * np.log(base))


def henyey_greenstein(g, theta):
    """Phase function (1 - theta^2) * (1 + 2 theta cos g + theta^2)^(-3/2)."""
    cos_g = np.cos(g)
    base = 1.0 + 2.0 * (theta * cos_g) + theta * theta
    if np.any(ad.value_of(base) <= 0.0):
        raise ad.DomainError("henyey_greenstein: non-positive denominator base")
    return (1.0 - theta * theta) * ad.powc(base, -1.5)


def geometric_factor(theta_ir, theta_r, phi):
    """Hotspot distance G; the radicand is clamped at zero against roundoff."""
    t_i = np.tan(theta_ir)
    t_r = np.tan(theta_r)
    rad = t_i * t_i + t_r * t_r - 2.0 * t_i * t_r * np.cos(phi)
    return np.sqrt(np.maximum(rad, 0.0))


def hotspot(rhoc, g_factor):
    """Backscatter term 1 + (1 - rhoc) / (1 + G)."""
    return 1.0 + (1.0 - rhoc) / (1.0 + g_factor)


def angular_factor(theta_ir, theta_r, phi, g, k, theta, rhoc):
    """The channel-independent part of the RPV model, M * F_HG * H.

    Angles are plain arrays; ``k``, ``theta``, ``rhoc`` may be tensors.
    """
    m = minnaert(theta_ir, theta_r, k)
    f = henyey_greenstein(g, theta)
    h = hotspot(rhoc, geometric_factor(theta_ir, theta_r, phi))
    return m * f * h


def rpv_factor(params: RpvParams, angles: AngleConfig) -> np.ndarray:
    """Per-channel reflectance factor rho0 * M * F_HG * H."""
    fac = angular_factor(angles.theta_ir, angles.theta_r, angles.phi, angles.g,
                         params.k, params.theta, params.rhoc)
    return params.rho0_array * fac


def shade(params: RpvParams, n, w_ir, w_r, l_ir: float = 1.0) -> np.ndarray:
    """Reflected colour for one surface point.

    The incoming-light cosine uses the flat normal [0,0,1] while the RPV
    angular terms use the supplied normal; light visibility is the constant 1.
    """
    angles = angles_from_directions(n, w_ir, w_r)
    cos_fac = abs(float(np.dot(unit(w_ir), FLAT_NORMAL)))
    return l_ir * cos_fac * rpv_factor(params, angles)


@dataclass(frozen=True)
class BrfSweep:
    """Reflectance over a polar grid of viewing directions, plus sun metadata."""

    zenith_deg: np.ndarray      # (Z,)
    azimuth_deg: np.ndarray     # (A,)
    values: np.ndarray          # (Z, A, 3)
    sun_zenith_deg: float
    sun_azimuth_deg: float


def brf_sweep(params: RpvParams, n, sun, zenith_steps: int = 90,
              azimuth_steps: int = 360) -> BrfSweep:
    """Evaluate the reflectance factor over a viewing-direction grid.

    Zeniths run from 0 up to (but not including) 90 degrees, capped at 89.5;
    azimuths cover the full circle.  Grazing cells where a view direction
    drops below the surface plane of ``n`` are clamped, not dropped.
    """
    if zenith_steps < 2 or azimuth_steps < 2:
        raise ValueError("brf_sweep: need at least 2 steps on each axis")
    n = unit(n)
    sun = unit(sun)
    zen_deg = np.minimum(np.arange(zenith_steps) * (90.0 / zenith_steps),
                         ZENITH_CAP_DEG)
    az_deg = np.arange(azimuth_steps) * (360.0 / azimuth_steps)
    zen = np.radians(zen_deg)[:, None]
    az = np.radians(az_deg)[None, :]
    w_r = np.stack([np.sin(zen) * np.cos(az) + 0.0 * az,
                    np.sin(zen) * np.sin(az),
                    np.cos(zen) + 0.0 * az], axis=-1)
    theta_ir, theta_r, phi, g = capped_angles(n, sun[None, None, :], w_r)
    fac = angular_factor(theta_ir, theta_r, phi, g,
                         params.k, params.theta, params.rhoc)
    values = params.rho0_array[None, None, :] * fac[..., None]
    sun_zen = float(np.degrees(np.arccos(np.clip(sun[2], -1.0, 1.0))))
    sun_az = float(np.degrees(np.arctan2(sun[1], sun[0])) % 360.0)
    return BrfSweep(zenith_deg=zen_deg, azimuth_deg=az_deg, values=values,
                    sun_zenith_deg=sun_zen, sun_azimuth_deg=sun_az)

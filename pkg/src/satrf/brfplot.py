"""Polar-grid reflectance sweep export: CSV table and a byte-stable SVG.

The SVG draws one annular sector per sweep cell, coloured through a fixed
33-stop palette with no interpolation, so identical sweeps always produce
identical bytes.  View zenith grows radially outward (90 degrees at the rim);
azimuth 0 points right (east) and increases counter-clockwise.
"""

from __future__ import annotations

import math

import numpy as np

from . import rpv

CSV_HEADER = "zenith_deg,azimuth_deg,r,g,b"

CHANNELS = ("lum", "r", "g", "b")

# fixed dark-blue-to-yellow palette; indexed, never interpolated
PALETTE = (
    "#440154", "#46085c", "#471063", "#481769", "#481d6f", "#482475",
    "#472a7a", "#46307e", "#453781", "#433d84", "#414287", "#3f4889",
    "#3c4f8a", "#3a548b", "#375a8c", "#345f8d", "#32648e", "#2f6a8e",
    "#2d6f8e", "#2a748e", "#28798e", "#267f8e", "#23848e", "#21898e",
    "#1f8e89", "#21937c", "#2a986e", "#3a9d5e", "#4ea24c", "#67a639",
    "#84a825", "#a3a916", "#c4a91d",
)


def channel_values(sweep: rpv.BrfSweep, channel: str) -> np.ndarray:
    """Scalar grid for colouring: one channel, or the channel mean."""
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}, got {channel!r}")
    if channel == "lum":
        return sweep.values.mean(axis=2)
    return sweep.values[:, :, CHANNELS.index(channel) - 1]


def write_csv(path, sweep: rpv.BrfSweep) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        for i, zen in enumerate(sweep.zenith_deg):
            for j, az in enumerate(sweep.azimuth_deg):
                r, g, b = sweep.values[i, j]
                f.write(f"{zen:.3f},{az:.3f},{r:.8f},{g:.8f},{b:.8f}\n")


def read_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Back-parse a sweep CSV into (zeniths, azimuths, values)."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        zs, azs, vals = [], [], []
        for line in f:
            z, a, r, g, b = line.strip().split(",")
            zs.append(float(z))
            azs.append(float(a))
            vals.append((float(r), float(g), float(b)))
    zen = sorted(set(zs))
    az = sorted(set(azs))
    grid = np.asarray(vals).reshape(len(zen), len(az), 3)
    return np.asarray(zen), np.asarray(az), grid


def _colour_index(value: float, vmin: float, vmax: float) -> int:
    if vmax - vmin <= 1e-15:
        return len(PALETTE) // 2
    frac = (value - vmin) / (vmax - vmin)
    return min(int(frac * len(PALETTE)), len(PALETTE) - 1)


def _pt(radius: float, az_deg: float, cx: float, cy: float) -> tuple[str, str]:
    a = math.radians(az_deg)
    # SVG y grows downward; negate so mathematical CCW stays CCW on screen
    return f"{cx + radius * math.cos(a):.3f}", f"{cy - radius * math.sin(a):.3f}"


def render_svg(sweep: rpv.BrfSweep, channel: str = "lum") -> str:
    """Self-contained SVG string for a sweep; pure function of its inputs."""
    vals = channel_values(sweep, channel)
    vmin = float(vals.min())
    vmax = float(vals.max())
    size = 440.0
    cx = cy = size / 2.0
    rim = 190.0
    zen = sweep.zenith_deg
    az = sweep.azimuth_deg
    nz, na = vals.shape
    dz = 90.0 / nz
    da = 360.0 / na
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" '
        f'height="{size:.0f}" viewBox="0 0 {size:.0f} {size:.0f}">',
        f'<rect width="{size:.0f}" height="{size:.0f}" fill="#ffffff"/>',
    ]
    for i in range(nz):
        r0 = zen[i] / 90.0 * rim
        r1 = min((zen[i] + dz) / 90.0 * rim, rim)
        for j in range(na):
            a0 = az[j]
            a1 = az[j] + da
            colour = PALETTE[_colour_index(float(vals[i, j]), vmin, vmax)]
            x0, y0 = _pt(r0, a0, cx, cy)
            x1, y1 = _pt(r1, a0, cx, cy)
            x2, y2 = _pt(r1, a1, cx, cy)
            x3, y3 = _pt(r0, a1, cx, cy)
            if r0 <= 1e-9:
                d = (f"M {x1} {y1} A {r1:.3f} {r1:.3f} 0 0 0 {x2} {y2} "
                     f"L {cx:.3f} {cy:.3f} Z")
            else:
                d = (f"M {x0} {y0} L {x1} {y1} A {r1:.3f} {r1:.3f} 0 0 0 "
                     f"{x2} {y2} L {x3} {y3} A {r0:.3f} {r0:.3f} 0 0 1 "
                     f"{x0} {y0} Z")
            parts.append(f'<path d="{d}" fill="{colour}" stroke="none"/>')
    # rim, crosshair, sun marker
    parts.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{rim:.3f}" '
                 'fill="none" stroke="#000000" stroke-width="1"/>')
    for adeg in (0.0, 90.0, 180.0, 270.0):
        x, y = _pt(rim, adeg, cx, cy)
        parts.append(f'<line x1="{cx:.3f}" y1="{cy:.3f}" x2="{x}" y2="{y}" '
                     'stroke="#000000" stroke-width="0.5" stroke-dasharray="4 4"/>')
    sx, sy = _pt(sweep.sun_zenith_deg / 90.0 * rim, sweep.sun_azimuth_deg, cx, cy)
    parts.append(f'<circle cx="{sx}" cy="{sy}" r="5" fill="none" '
                 'stroke="#ff0000" stroke-width="2"/>')
    parts.append(f'<text x="6" y="16" font-family="monospace" font-size="12">'
                 f'channel={channel} min={vmin:.6f} max={vmax:.6f} '
                 f'sun=({sweep.sun_zenith_deg:.1f},{sweep.sun_azimuth_deg:.1f})'
                 '</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, sweep: rpv.BrfSweep, channel: str = "lum") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(render_svg(sweep, channel))

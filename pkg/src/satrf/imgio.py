"""PFM and PPM image files, plus flat key=value metadata files.

PFM: "PF" (colour) or "Pf" (grayscale) header, dimensions line, scale line,
then float32 rows bottom-to-top.  We always write little-endian (negative
scale, fixed at -1.0).  PPM: binary P6 with maxval 255, used for 8-bit
previews of linear [0,1] data.
"""

from __future__ import annotations

import numpy as np


class ImageFormatError(ValueError):
    """Malformed or truncated image file; message carries file and offset."""


def write_pfm(path, arr: np.ndarray) -> None:
    """Write a (H,W) or (H,W,3) float array as little-endian PFM."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 2:
        header = b"Pf\n"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = b"PF\n"
    else:
        raise ValueError(f"write_pfm: expected (H,W) or (H,W,3), got {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(arr).astype("<f4").tobytes())


def _read_token(buf: bytes, pos: int, path) -> tuple[bytes, int]:
    while pos < len(buf) and buf[pos:pos + 1].isspace():
        pos += 1
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ImageFormatError(f"{path}: unexpected end of header at byte {start}")
    return buf[start:pos], pos


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float64 array, honouring the scale's endianness."""
    with open(path, "rb") as f:
        buf = f.read()
    magic, pos = _read_token(buf, 0, path)
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise ImageFormatError(f"{path}: bad magic {magic!r} at byte 0")
    wtok, pos = _read_token(buf, pos, path)
    htok, pos = _read_token(buf, pos, path)
    stok, pos = _read_token(buf, pos, path)
    try:
        w, h = int(wtok), int(htok)
        scale = float(stok)
    except ValueError:
        raise ImageFormatError(f"{path}: non-numeric header field near byte {pos}")
    if w <= 0 or h <= 0 or scale == 0.0:
        raise ImageFormatError(f"{path}: invalid header values near byte {pos}")
    pos += 1  # single whitespace byte after the scale line
    need = w * h * channels * 4
    data = buf[pos:pos + need]
    if len(data) < need:
        raise ImageFormatError(
            f"{path}: truncated at byte {pos + len(data)}, need {pos + need} bytes")
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data, dtype=dtype).reshape(h, w, channels)
    arr = np.flipud(arr).astype(np.float64)
    if abs(scale) not in (0.0, 1.0):
        arr = arr * abs(scale)
    return arr[:, :, 0] if channels == 1 else arr


def write_ppm(path, arr: np.ndarray) -> None:
    """8-bit P6 preview of a linear [0,1] colour image (values are clipped)."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"write_ppm: expected (H,W,3), got {arr.shape}")
    h, w = arr.shape[:2]
    bytes8 = (np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(bytes8.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 file back into uint8 (H,W,3)."""
    with open(path, "rb") as f:
        buf = f.read()
    magic, pos = _read_token(buf, 0, path)
    if magic != b"P6":
        raise ImageFormatError(f"{path}: bad magic {magic!r} at byte 0")
    wtok, pos = _read_token(buf, pos, path)
    htok, pos = _read_token(buf, pos, path)
    mtok, pos = _read_token(buf, pos, path)
    try:
        w, h, maxval = int(wtok), int(htok), int(mtok)
    except ValueError:
        raise ImageFormatError(f"{path}: non-numeric header field near byte {pos}")
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported maxval {maxval}")
    pos += 1
    need = w * h * 3
    data = buf[pos:pos + need]
    if len(data) < need:
        raise ImageFormatError(
            f"{path}: truncated at byte {pos + len(data)}, need {pos + need} bytes")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()


def write_kv(path, items: dict) -> None:
    """Flat UTF-8 key=value file, one pair per line, keys written in order."""
    lines = []
    for key, value in items.items():
        key = str(key)
        if "=" in key or "\n" in key:
            raise ValueError(f"write_kv: invalid key {key!r}")
        sval = str(value)
        if "\n" in sval:
            raise ValueError(f"write_kv: value for {key!r} contains a newline")
        lines.append(f"{key}={sval}\n")
    with open(path, "w", encoding="utf-8") as f:
        f.write("".join(lines))


def read_kv(path) -> dict[str, str]:
    """Parse a key=value file; blank lines and '#' comment lines are skipped."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out

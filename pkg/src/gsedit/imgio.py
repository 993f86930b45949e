"""PNG and PFM image I/O.

PNGs carry 8-bit color frames and {0,255} masks; depth images use
little-endian grayscale PFM so bit-exact round trips stay trivial. Files
are written atomically (temp + rename) so partially written outputs never
survive.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def png_bytes(arr: np.ndarray) -> bytes:
    """Encode an (H, W) or (H, W, 3) uint8 array as PNG bytes."""
    a = np.ascontiguousarray(arr)
    if a.dtype != np.uint8:
        raise ValueError("png_bytes expects uint8 data")
    mode = "L" if a.ndim == 2 else "RGB"
    img = Image.fromarray(a, mode)
    import io
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def write_png(path: str | Path, arr: np.ndarray) -> None:
    atomic_write_bytes(path, png_bytes(arr))


def read_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img)


def mask_to_png_array(mask01: np.ndarray) -> np.ndarray:
    """{0,1} mask to the {0,255} bytes stored on disk."""
    return (np.asarray(mask01, dtype=np.uint8) * 255).astype(np.uint8)


def png_array_to_mask(arr: np.ndarray) -> np.ndarray:
    return (np.asarray(arr) >= 128).astype(np.uint8)


def pfm_bytes(depth: np.ndarray) -> bytes:
    """Encode an (H, W) float32 array as a little-endian grayscale PFM."""
    d = np.asarray(depth, dtype="<f4")
    if d.ndim != 2:
        raise ValueError("pfm_bytes expects a 2D array")
    h, w = d.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    # PFM scanlines run bottom to top.
    return header + d[::-1].tobytes()


def write_pfm(path: str | Path, depth: np.ndarray) -> None:
    atomic_write_bytes(path, pfm_bytes(depth))


def read_pfm(path_or_bytes) -> np.ndarray:
    data = Path(path_or_bytes).read_bytes() if not isinstance(path_or_bytes, bytes) else path_or_bytes
    if not data.startswith(b"Pf"):
        raise ValueError("not a grayscale PFM")
    parts = data.split(b"\n", 3)
    if len(parts) < 4:
        raise ValueError("truncated PFM header")
    w, h = (int(v) for v in parts[1].split())
    scale = float(parts[2])
    payload = parts[3]
    need = w * h * 4
    if len(payload) < need:
        raise ValueError(f"PFM payload {len(payload)} bytes, expected {need}")
    dt = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(payload[:need], dtype=dt).reshape(h, w)
    return arr[::-1].astype(np.float32)

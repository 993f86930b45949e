"""Independent readers for the bundle's file formats.

PFM: "Pf\\n<w> <h>\\n<scale>\\n" header, float32 scanlines stored bottom to
top, little-endian when scale < 0. Tensor file: 8-byte magic "GSETNSR1",
little-endian u32 header length, JSON header {dtype, shape, channel_names},
row-major little-endian float32 payload whose length must match the shape
exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


class FormatError(Exception):
    """Malformed file; the message names the offending path."""


def read_pfm(path: str | Path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(b"Pf"):
        raise FormatError(f"{path}: not a grayscale PFM")
    parts = data.split(b"\n", 3)
    if len(parts) < 4:
        raise FormatError(f"{path}: truncated PFM header")
    try:
        w, h = (int(v) for v in parts[1].split())
        scale = float(parts[2])
    except ValueError as e:
        raise FormatError(f"{path}: bad PFM header: {e}") from None
    payload = parts[3]
    need = w * h * 4
    if len(payload) < need:
        raise FormatError(f"{path}: payload {len(payload)} bytes, expected {need}")
    dt = "<f4" if scale < 0 else ">f4"
    rows = np.frombuffer(payload[:need], dtype=dt).reshape(h, w)
    return rows[::-1].astype(np.float32)


TENSOR_MAGIC = b"GSETNSR1"


def read_tensor(path: str | Path) -> tuple[np.ndarray, list[str]]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:8] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad or missing tensor magic")
    (hlen,) = struct.unpack_from("<I", data, 8)
    if len(data) < 12 + hlen:
        raise FormatError(f"{path}: truncated tensor header")
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: bad tensor header: {e}") from None
    if header.get("dtype") != "f32":
        raise FormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    shape = header.get("shape")
    names = header.get("channel_names")
    if not isinstance(shape, list) or not all(isinstance(v, int) and v > 0 for v in shape):
        raise FormatError(f"{path}: bad shape {shape!r}")
    payload = data[12 + hlen:]
    need = int(np.prod(shape)) * 4
    if len(payload) != need:
        raise FormatError(f"{path}: payload {len(payload)} bytes, expected {need}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape), list(names or [])


def read_png(path: str | Path) -> np.ndarray:
    from PIL import Image

    path = Path(path)
    try:
        with Image.open(path) as img:
            return np.asarray(img)
    except Exception as e:
        raise FormatError(f"{path}: {e}") from None

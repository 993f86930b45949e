"""Binary tensor container for the channel stack.

Layout: 8-byte magic "GSETNSR1", little-endian u32 header length, a JSON
header {"dtype": "f32", "shape": [...], "channel_names": [...]}, then the
row-major little-endian float32 payload. The reader validates the payload
length exactly and never reads past the declared size.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"GSETNSR1"


def tensor_bytes(array: np.ndarray, channel_names: list[str] | tuple[str, ...]) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    names = list(channel_names)
    axis = 1 if arr.ndim >= 2 else 0
    if arr.shape[axis] != len(names):
        raise TensorFormatError(
            f"channel axis has {arr.shape[axis]} entries but {len(names)} names")
    header = json.dumps({"dtype": "f32", "shape": list(arr.shape),
                         "channel_names": names}, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header + arr.tobytes()


def write_tensor(path: str | Path, array: np.ndarray,
                 channel_names: list[str] | tuple[str, ...]) -> None:
    from .imgio import atomic_write_bytes
    atomic_write_bytes(path, tensor_bytes(array, channel_names))


def parse_tensor(data: bytes) -> tuple[np.ndarray, list[str]]:
    if len(data) < len(MAGIC) + 4:
        raise TensorFormatError("file shorter than magic + header length")
    if data[:len(MAGIC)] != MAGIC:
        raise TensorFormatError(f"bad magic {data[:len(MAGIC)]!r}")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    off = len(MAGIC) + 4
    if len(data) < off + hlen:
        raise TensorFormatError("truncated JSON header")
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TensorFormatError(f"bad JSON header: {e}") from None
    if header.get("dtype") != "f32":
        raise TensorFormatError(f"unsupported dtype {header.get('dtype')!r}")
    shape = header.get("shape")
    names = header.get("channel_names")
    if (not isinstance(shape, list) or not shape
            or any(not isinstance(v, int) or v <= 0 for v in shape)):
        raise TensorFormatError(f"bad shape {shape!r}")
    if not isinstance(names, list):
        raise TensorFormatError("missing channel_names")
    axis = 1 if len(shape) >= 2 else 0
    if shape[axis] != len(names):
        raise TensorFormatError(
            f"channel axis has {shape[axis]} entries but {len(names)} names")
    need = int(np.prod(shape)) * 4
    payload = data[off + hlen:]
    if len(payload) != need:
        raise TensorFormatError(f"payload is {len(payload)} bytes, expected {need}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return arr, list(names)


def read_tensor(path: str | Path) -> tuple[np.ndarray, list[str]]:
    return parse_tensor(Path(path).read_bytes())

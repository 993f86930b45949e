"""Recompute the deterministic stack channels from bundle bytes.

Channels [4..14) of the stack are pure functions of the stored images:
RGB frames decode to uint8, scale to [0, 1] float64, 8x8 block-average,
and map through rows (1,0,0), (0,1,0), (0,0,1), (1/3,1/3,1/3); masks
block-average their {0,1} values; everything casts to float32. Agreement
must be exact, byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import BundleView

POOL = 8


class MismatchError(Exception):
    """First differing channel, with its max abs difference."""


def _block_mean(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    if img.ndim == 2:
        return img.reshape(h // POOL, POOL, w // POOL, POOL).mean(axis=(1, 3))
    return img.reshape(h // POOL, POOL, w // POOL, POOL, img.shape[2]).mean(axis=(1, 3))


def _encode(rgb_u8: np.ndarray) -> np.ndarray:
    pooled = _block_mean(rgb_u8.astype(np.float64) / 255.0)
    r, g, b = pooled[:, :, 0], pooled[:, :, 1], pooled[:, :, 2]
    return np.stack([r, g, b, (r + g + b) / 3.0], axis=0)


def recompute_channels(view: BundleView) -> np.ndarray:
    """Channels [4..14) rebuilt from the bundle images, float32."""
    n = view.num_frames
    h, w = view.image_size
    out = np.zeros((n, 10, h // POOL, w // POOL), dtype=np.float64)
    for i in range(n):
        out[i, 0:4] = _encode(view.masked_video[i])
        out[i, 4] = _block_mean(view.inpaint_masks[i].astype(np.float64))
        out[i, 5:9] = _encode(view.gaussian_video[i])
        out[i, 9] = _block_mean(view.edge_masks[i].astype(np.float64))
    return out.astype(np.float32)


@dataclass
class VerifyReport:
    ok: bool
    num_frames: int
    per_channel_max_diff: dict[str, float] = field(default_factory=dict)
    noise_channels_zero: bool = True

    def to_dict(self) -> dict:
        return {"ok": self.ok, "num_frames": self.num_frames,
                "noise_channels_zero": self.noise_channels_zero,
                "per_channel_max_diff": self.per_channel_max_diff}


def verify_stack(view: BundleView, raise_on_mismatch: bool = True) -> VerifyReport:
    """Assert channels [4..14) of the stored stack equal the recomputation
    exactly; report per-channel max abs differences."""
    tensor, names = view.stack
    recomputed = recompute_channels(view)
    diffs: dict[str, float] = {}
    first_bad: str | None = None
    for ch in range(4, 14):
        d = float(np.abs(tensor[:, ch].astype(np.float64)
                         - recomputed[:, ch - 4].astype(np.float64)).max())
        diffs[names[ch]] = d
        if d != 0.0 and first_bad is None:
            first_bad = names[ch]
    noise_zero = not tensor[:, :4].any()
    ok = first_bad is None and noise_zero
    if not ok and raise_on_mismatch:
        if first_bad is not None:
            raise MismatchError(
                f"channel {first_bad!r} differs (max abs diff {diffs[first_bad]:.3e})")
        raise MismatchError("noise channels [0..4) are not zero")
    return VerifyReport(ok=ok, num_frames=view.num_frames,
                        per_channel_max_diff=diffs, noise_channels_zero=noise_zero)

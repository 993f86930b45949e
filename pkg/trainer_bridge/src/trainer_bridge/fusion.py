"""Zero-init additive fusion check.

Conditioning features enter a host feature map as
base + fusion(features), where the fusion path is layer normalization,
SiLU activation, then a convolution whose weights and bias start at zero.
At zero init the update must be an exact numeric identity on the host
features; any perturbed weight must change the output. A configuration
with normalization and activation disabled degenerates to a pure linear
map, which is the variant whose residual scales linearly with the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def _layer_norm(x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    # Normalize across channels at every spatial position.
    mean = x.mean(axis=0, keepdims=True)
    var = x.var(axis=0, keepdims=True)
    return (x - mean) / np.sqrt(var + eps)


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padding 2D convolution: x (C_in, H, W), weight
    (C_out, C_in, k, k) with odd k, bias (C_out,)."""
    c_out, c_in, k, _ = weight.shape
    if x.shape[0] != c_in:
        raise ValueError(f"input has {x.shape[0]} channels, weight expects {c_in}")
    pad = k // 2
    h, w = x.shape[1:]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((c_out, h, w))
    for dy in range(k):
        for dx in range(k):
            patch = xp[:, dy:dy + h, dx:dx + w]
            out += np.einsum("oc,chw->ohw", weight[:, :, dy, dx], patch)
    return out + bias[:, None, None]


@dataclass
class ZeroInitFusion:
    """Fusion path over (C, H, W) features; weights default to zero."""

    weight: np.ndarray                 # (C_out, C_in, k, k)
    bias: np.ndarray                   # (C_out,)
    normalize: bool = True
    activate: bool = True

    @staticmethod
    def zero_init(c_in: int, c_out: int, kernel: int = 3,
                  normalize: bool = True, activate: bool = True) -> "ZeroInitFusion":
        return ZeroInitFusion(np.zeros((c_out, c_in, kernel, kernel)),
                              np.zeros(c_out), normalize, activate)

    def __call__(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if self.normalize:
            x = _layer_norm(x)
        if self.activate:
            x = _silu(x)
        return conv2d(x, self.weight, self.bias)

    def perturbed(self, delta: float = 1e-3) -> "ZeroInitFusion":
        w = self.weight.copy()
        w[0, 0, w.shape[2] // 2, w.shape[3] // 2] += delta
        return ZeroInitFusion(w, self.bias.copy(), self.normalize, self.activate)


def fuse(base: np.ndarray, features: np.ndarray, fusion: ZeroInitFusion) -> np.ndarray:
    return np.asarray(base, dtype=np.float64) + fusion(features)


def check_zero_init_fusion(features: np.ndarray, base: np.ndarray,
                           fusion: ZeroInitFusion | None = None) -> bool:
    """True when the zero-init update leaves the host features bit-exactly
    unchanged AND a perturbed weight changes them."""
    base = np.asarray(base, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    if fusion is None:
        fusion = ZeroInitFusion.zero_init(features.shape[0], base.shape[0])
    if (fusion.weight != 0).any() or (fusion.bias != 0).any():
        raise ValueError("check expects a zero-initialized fusion map")
    fused = fuse(base, features, fusion)
    if not np.array_equal(fused, base):
        return False
    bumped = fuse(base, features, fusion.perturbed())
    return not np.array_equal(bumped, base)

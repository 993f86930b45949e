"""Training-clip preparation: inpainting masks, masked video, reference
crops, object-free random masks, and reference augmentation.

Every randomized operation is a pure function of (inputs, seed): the same
seed yields byte-identical output regardless of call site or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CropExceedsImage,
    FullyBehindCamera,
    MissingCamera,
    NoFreeRegion,
    NotFullyVisible,
    ShapeMismatch,
)
from .geometry import NEAR_PLANE, CameraFrame, project_points
from .layout import Box3D, SceneLayout, box_corners

# Rec.601 luma weights, used for the saturation axis.
_LUMA = np.array([0.299, 0.587, 0.114])

DEFAULT_PAD_FRAC = 0.1
DEFAULT_MIN_PAD_PX = 8.0


@dataclass(frozen=True)
class AugmentParams:
    brightness_range: tuple[float, float] = (1.0, 1.0)
    contrast_range: tuple[float, float] = (1.0, 1.0)
    saturation_range: tuple[float, float] = (1.0, 1.0)
    flip_probability: float = 0.0

    def __post_init__(self):
        for lo, hi in (self.brightness_range, self.contrast_range, self.saturation_range):
            if not (0 < lo <= hi):
                raise ValueError("ranges must satisfy 0 < lo <= hi")
        if not (0.0 <= self.flip_probability <= 1.0):
            raise ValueError("flip_probability must lie in [0, 1]")


def _projected_aabb(box: Box3D, cam: CameraFrame) -> tuple[float, float, float, float]:
    """(u0, v0, u1, v1) of the corners in front of the near plane.

    Raises FullyBehindCamera when no corner projects.
    """
    uv, z = project_points(box_corners(box), cam)
    front = z > NEAR_PLANE
    if not front.any():
        raise FullyBehindCamera("all box corners are behind the near plane")
    uv = uv[front]
    return float(uv[:, 0].min()), float(uv[:, 1].min()), float(uv[:, 0].max()), float(uv[:, 1].max())


def _fill_rect(h: int, w: int, x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    """Binary mask of pixels whose integer sample point lies in the rect."""
    mask = np.zeros((h, w), dtype=np.uint8)
    cx0 = max(0, int(math.ceil(x0)))
    cx1 = min(w - 1, int(math.floor(x1)))
    cy0 = max(0, int(math.ceil(y0)))
    cy1 = min(h - 1, int(math.floor(y1)))
    if cx0 <= cx1 and cy0 <= cy1:
        mask[cy0:cy1 + 1, cx0:cx1 + 1] = 1
    return mask


def make_mask(box: Box3D, cam: CameraFrame, pad_frac: float = DEFAULT_PAD_FRAC,
              min_pad_px: float = DEFAULT_MIN_PAD_PX) -> np.ndarray:
    """Filled, enlarged projected-box rectangle as a {0,1} uint8 mask.

    The axis-aligned bounding rectangle of the projected corners grows on
    each side by max(pad_frac * side_length, min_pad_px) and is clipped to
    the image.
    """
    u0, v0, u1, v1 = _projected_aabb(box, cam)
    pad_x = max(pad_frac * (u1 - u0), min_pad_px)
    pad_y = max(pad_frac * (v1 - v0), min_pad_px)
    k = cam.intrinsics
    return _fill_rect(k.height, k.width, u0 - pad_x, v0 - pad_y, u1 + pad_x, v1 + pad_y)


def gray_out(frame: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Set masked pixels to exact mid-gray (0.5); others untouched."""
    img = np.asarray(frame, dtype=np.float64)
    m = np.asarray(mask)
    if img.shape[:2] != m.shape:
        raise ShapeMismatch(f"frame {img.shape[:2]} vs mask {m.shape}")
    out = img.copy()
    out[m.astype(bool)] = 0.5
    return out


def pick_reference_frame(clip_frames, target_frame: int) -> int:
    """Clip frame with the largest temporal distance to the target; ties
    break toward the earlier frame."""
    frames = list(clip_frames)
    if not frames:
        raise ValueError("clip is empty")
    if target_frame not in frames:
        raise ValueError("target frame not in clip")
    return min(frames, key=lambda i: (-abs(i - target_frame), i))


def crop_reference(frame: np.ndarray, box: Box3D, cam: CameraFrame) -> np.ndarray:
    """Square crop around a fully visible object.

    Fully visible means every corner projects inside the image with depth
    beyond the near plane. The square has side max(width, height) of the
    projected bounding rectangle, centered on it, shifted (never shrunk) to
    fit inside the image.
    """
    img = np.asarray(frame)
    h, w = img.shape[:2]
    uv, z = project_points(box_corners(box), cam)
    if (z <= NEAR_PLANE).any():
        raise NotFullyVisible("a box corner is behind the near plane")
    if (uv[:, 0].min() < 0 or uv[:, 0].max() > w - 1
            or uv[:, 1].min() < 0 or uv[:, 1].max() > h - 1):
        raise NotFullyVisible("a box corner projects outside the image")
    u0, v0 = uv[:, 0].min(), uv[:, 1].min()
    u1, v1 = uv[:, 0].max(), uv[:, 1].max()
    side = max(1, int(round(max(u1 - u0, v1 - v0))))
    if side > min(h, w):
        raise CropExceedsImage(f"square side {side} exceeds image {w}x{h}")
    x0 = int(math.floor((u0 + u1) / 2.0 - side / 2.0 + 0.5))
    y0 = int(math.floor((v0 + v1) / 2.0 - side / 2.0 + 0.5))
    x0 = min(max(x0, 0), w - side)
    y0 = min(max(y0, 0), h - side)
    return img[y0:y0 + side, x0:x0 + side].copy()


def _object_aabbs(layout: SceneLayout, frame: int, cam: CameraFrame):
    rects = []
    for track in layout.tracks:
        box = track.boxes.get(frame)
        if box is None:
            continue
        try:
            rects.append(_projected_aabb(box, cam))
        except FullyBehindCamera:
            continue
    return rects


def sample_object_free_rect(layout: SceneLayout, frame: int, camera_id: str,
                            seed: int, max_attempts: int = 50,
                            side_range: tuple[int, int] = (64, 256)) -> tuple[int, int, int, int]:
    """First random rectangle (x0, y0, w, h) disjoint from every projected
    object bounding rectangle. Deterministic for a given seed."""
    if not layout.has_camera(frame, camera_id):
        raise MissingCamera(f"no camera {camera_id!r} for frame {frame}")
    cam = layout.camera(frame, camera_id)
    k = cam.intrinsics
    rects = _object_aabbs(layout, frame, cam)
    rng = np.random.Generator(np.random.PCG64(seed))
    lo, hi = side_range
    for _ in range(max_attempts):
        rw = int(rng.integers(lo, min(hi, k.width) + 1))
        rh = int(rng.integers(lo, min(hi, k.height) + 1))
        x0 = int(rng.integers(0, k.width - rw + 1))
        y0 = int(rng.integers(0, k.height - rh + 1))
        hit = False
        for (u0, v0, u1, v1) in rects:
            if x0 <= u1 and x0 + rw - 1 >= u0 and y0 <= v1 and y0 + rh - 1 >= v0:
                hit = True
                break
        if not hit:
            return x0, y0, rw, rh
    raise NoFreeRegion(f"no object-free rectangle after {max_attempts} attempts")


def random_object_free_mask(layout: SceneLayout, frame: int, camera_id: str,
                            seed: int, max_attempts: int = 50) -> np.ndarray:
    """Binary mask of one random object-free rectangle (see
    sample_object_free_rect)."""
    cam = layout.camera(frame, camera_id)
    x0, y0, rw, rh = sample_object_free_rect(layout, frame, camera_id, seed, max_attempts)
    mask = np.zeros((cam.intrinsics.height, cam.intrinsics.width), dtype=np.uint8)
    mask[y0:y0 + rh, x0:x0 + rw] = 1
    return mask


def augment_reference(img: np.ndarray, params: AugmentParams, seed: int) -> np.ndarray:
    """Photometric reference augmentation, in order: horizontal flip with
    flip_probability, brightness (img * b), contrast about the global mean,
    then saturation as a lerp between Rec.601 luma and the image. Factors
    draw uniformly from the parameter ranges; output is clamped to [0, 1]."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = np.asarray(img, dtype=np.float64).copy()
    if rng.random() < params.flip_probability:
        out = out[:, ::-1].copy()
    b = rng.uniform(*params.brightness_range)
    c = rng.uniform(*params.contrast_range)
    s = rng.uniform(*params.saturation_range)
    # Unit factors are exact no-ops so that, e.g., flipping alone is a true
    # involution.
    if b != 1.0:
        out = out * b
    if c != 1.0:
        mean = out.mean()
        out = (out - mean) * c + mean
    if s != 1.0:
        luma = out @ _LUMA
        out = luma[:, :, None] + (out - luma[:, :, None]) * s
    return np.clip(out, 0.0, 1.0)

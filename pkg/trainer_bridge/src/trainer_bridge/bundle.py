"""Lazy view over a conditioning-bundle directory.

Directory contract: gaussian/ masked/ (RGB PNG per frame, named by global
frame index), mask/ edge/ ({0,255} grayscale PNG), depth/ (PFM),
reference.png, stack.tnsr, clip_meta.json. Arrays load on first access and
are cached; shapes are cross-checked against the metadata.
"""

from __future__ import annotations

import json
from functools import cached_property
from pathlib import Path

import numpy as np

from .formats import FormatError, read_pfm, read_png, read_tensor

EXPECTED_CHANNEL_NAMES = (
    "noise:0", "noise:1", "noise:2", "noise:3",
    "masked_video:0", "masked_video:1", "masked_video:2", "masked_video:3",
    "inpaint_mask",
    "gaussian_video:0", "gaussian_video:1", "gaussian_video:2", "gaussian_video:3",
    "edge_mask",
)


class BundleView:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        meta_path = self.root / "clip_meta.json"
        try:
            self.clip_meta = json.loads(meta_path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise FormatError(f"{meta_path}: {e}") from None
        for key in ("start_frame", "num_frames", "image_size"):
            if key not in self.clip_meta:
                raise FormatError(f"{meta_path}: missing {key!r}")

    @property
    def num_frames(self) -> int:
        return int(self.clip_meta["num_frames"])

    @property
    def image_size(self) -> tuple[int, int]:
        h, w = self.clip_meta["image_size"]
        return int(h), int(w)

    def _frame_paths(self, sub: str, ext: str) -> list[Path]:
        start = int(self.clip_meta["start_frame"])
        paths = [self.root / sub / f"{start + i:04d}.{ext}" for i in range(self.num_frames)]
        for p in paths:
            if not p.exists():
                raise FormatError(f"{p}: missing bundle frame")
        return paths

    def _stack_pngs(self, sub: str, channels: int) -> np.ndarray:
        h, w = self.image_size
        frames = []
        for p in self._frame_paths(sub, "png"):
            arr = read_png(p)
            want = (h, w, 3) if channels == 3 else (h, w)
            if arr.shape != want:
                raise FormatError(f"{p}: shape {arr.shape}, expected {want}")
            frames.append(arr)
        return np.stack(frames)

    @cached_property
    def gaussian_video(self) -> np.ndarray:
        return self._stack_pngs("gaussian", 3)

    @cached_property
    def masked_video(self) -> np.ndarray:
        return self._stack_pngs("masked", 3)

    @cached_property
    def inpaint_masks(self) -> np.ndarray:
        return (self._stack_pngs("mask", 1) >= 128).astype(np.uint8)

    @cached_property
    def edge_masks(self) -> np.ndarray:
        return (self._stack_pngs("edge", 1) >= 128).astype(np.uint8)

    @cached_property
    def depth_boxes(self) -> np.ndarray:
        h, w = self.image_size
        frames = []
        for p in self._frame_paths("depth", "pfm"):
            arr = read_pfm(p)
            if arr.shape != (h, w):
                raise FormatError(f"{p}: shape {arr.shape}, expected {(h, w)}")
            frames.append(arr)
        return np.stack(frames)

    @cached_property
    def reference_image(self) -> np.ndarray:
        p = self.root / "reference.png"
        arr = read_png(p)
        if arr.ndim != 3 or arr.shape[0] != arr.shape[1]:
            raise FormatError(f"{p}: reference must be a square RGB image, got {arr.shape}")
        return arr

    @cached_property
    def stack(self) -> tuple[np.ndarray, list[str]]:
        p = self.root / "stack.tnsr"
        tensor, names = read_tensor(p)
        h, w = self.image_size
        want = (self.num_frames, len(EXPECTED_CHANNEL_NAMES), h // 8, w // 8)
        if tensor.shape != want:
            raise FormatError(f"{p}: stack shape {tensor.shape}, expected {want}")
        if tuple(names) != EXPECTED_CHANNEL_NAMES:
            raise FormatError(f"{p}: channel names {names} do not match the documented layout")
        return tensor, names


def load_bundle(root: str | Path) -> BundleView:
    return BundleView(root)

"""Conditioning-bundle directory layout.

Per clip: gaussian/ masked/ (8-bit RGB PNG per frame, named by the global
frame index), mask/ edge/ ({0,255} single-channel PNG), depth/
(little-endian PFM), reference.png, stack.tnsr (channel-stack tensor), and
clip_meta.json. This is the contract consumed by training-side loaders.
"""

from __future__ import annotations

import json
from pathlib import Path

from .editing import CHANNEL_NAMES, ChannelStack, ConditioningBundle, assemble_channel_stack
from .imgio import atomic_write_bytes, mask_to_png_array, write_pfm, write_png
from .tensorfile import write_tensor

SUBDIRS = ("gaussian", "masked", "mask", "edge", "depth")


def write_bundle(out_dir: str | Path, bundle: ConditioningBundle,
                 stack: ChannelStack | None = None) -> Path:
    out = Path(out_dir)
    for sub in SUBDIRS:
        (out / sub).mkdir(parents=True, exist_ok=True)
    start = bundle.clip_meta["start_frame"]
    for i in range(bundle.num_frames):
        f = start + i
        write_png(out / "gaussian" / f"{f:04d}.png", bundle.gaussian_video[i])
        write_png(out / "masked" / f"{f:04d}.png", bundle.masked_video[i])
        write_png(out / "mask" / f"{f:04d}.png", mask_to_png_array(bundle.inpaint_masks[i]))
        write_png(out / "edge" / f"{f:04d}.png", mask_to_png_array(bundle.edge_masks[i]))
        write_pfm(out / "depth" / f"{f:04d}.pfm", bundle.depth_boxes[i])
    write_png(out / "reference.png", bundle.reference_image)
    if stack is None:
        stack = assemble_channel_stack(bundle)
    write_tensor(out / "stack.tnsr", stack.tensor, list(stack.channel_names))
    meta = dict(bundle.clip_meta)
    meta["convention"] = {"camera": "+z forward,+y down", "yaw_zero": "+x"}
    meta["channel_names"] = list(CHANNEL_NAMES)
    atomic_write_bytes(out / "clip_meta.json",
                       (json.dumps(meta, sort_keys=True, indent=2) + "\n").encode("utf-8"))
    return out

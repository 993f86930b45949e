"""Edit application and conditioning-bundle assembly.

An edit is one of Reposition / Insert / Delete. build_bundle turns an edit
plus a clip window into the full conditioning stack: the edited object's
gaussian video over white, depth-aware boxes and edge masks of the edited
scene, the enlarged inpainting masks, the grayed-out source frames, and a
square reference image. assemble_channel_stack packs everything into the
14-channel latent-resolution tensor consumed by inpainting trainers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import dataprep
from .errors import (
    DimensionNotDivisible,
    DegenerateExtent,
    DuplicateObjectId,
    EmptyAsset,
    FullyBehindCamera,
    MissingAsset,
    UnknownObject,
)
from .gaussians import (
    GaussianCloud,
    RenderConfig,
    composite_over_white,
    covariances_world,
    render,
)
from .geometry import wrap_angle, yaw_pose
from .layout import Box3D, ObjectTrack, SceneLayout, render_depth_boxes, render_edge_mask


@dataclass(frozen=True)
class Reposition:
    object_id: str
    delta_yaw: float                      # radians, + is counter-clockwise from above
    delta_t_local: np.ndarray             # meters in the object's pre-edit frame: +x forward, +y left

    def __post_init__(self):
        object.__setattr__(self, "delta_t_local",
                           np.asarray(self.delta_t_local, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class Insert:
    asset_ref: str
    track: ObjectTrack


@dataclass(frozen=True)
class Delete:
    object_id: str


EditCommand = Reposition | Insert | Delete

# Suffix appended to an inserted track's payload id so the engine, not the
# payload, owns id uniqueness.
INSERT_ID_SUFFIX = ".ins"


def inserted_object_id(cmd: Insert) -> str:
    return cmd.track.object_id + INSERT_ID_SUFFIX


def edited_object_id(cmd: EditCommand) -> str:
    """Id of the edited instance; for Delete this is the removed object."""
    if isinstance(cmd, Insert):
        return inserted_object_id(cmd)
    return cmd.object_id


def apply_edit(layout: SceneLayout, cmd: EditCommand) -> SceneLayout:
    """Apply one edit, leaving every untargeted track untouched.

    Reposition moves each frame's box by delta_yaw and by delta_t_local
    expressed in the object's pre-edit local frame. Insert appends the
    payload track under an engine-derived fresh id. Delete removes the
    track.
    """
    if isinstance(cmd, Reposition):
        ids = [t.object_id for t in layout.tracks]
        if cmd.object_id not in ids:
            raise UnknownObject(f"no object {cmd.object_id!r} to reposition")
        new_tracks = []
        for t in layout.tracks:
            if t.object_id != cmd.object_id:
                new_tracks.append(t)
                continue
            boxes = {}
            for f, box in t.boxes.items():
                c, s = math.cos(box.yaw), math.sin(box.yaw)
                rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
                boxes[f] = Box3D(center=box.center + rot @ cmd.delta_t_local,
                                 dims=box.dims,
                                 yaw=wrap_angle(box.yaw + cmd.delta_yaw))
            new_tracks.append(replace(t, boxes=boxes))
        return replace(layout, tracks=new_tracks)
    if isinstance(cmd, Insert):
        new_id = inserted_object_id(cmd)
        if any(t.object_id == new_id for t in layout.tracks):
            raise DuplicateObjectId(f"object id {new_id!r} already exists")
        track = replace(cmd.track, object_id=new_id)
        return replace(layout, tracks=list(layout.tracks) + [track])
    if isinstance(cmd, Delete):
        ids = [t.object_id for t in layout.tracks]
        if cmd.object_id not in ids:
            raise UnknownObject(f"no object {cmd.object_id!r} to delete")
        return replace(layout, tracks=[t for t in layout.tracks if t.object_id != cmd.object_id])
    raise TypeError(f"unknown edit command {cmd!r}")


def asset_extent(asset: GaussianCloud) -> np.ndarray:
    """Axis-aligned extent of the asset's 3-sigma footprint, per axis."""
    if len(asset) == 0:
        raise EmptyAsset("asset contains no gaussians")
    cov = covariances_world(asset)
    half = 3.0 * np.sqrt(np.maximum(np.stack([cov[:, 0, 0], cov[:, 1, 1], cov[:, 2, 2]], axis=1), 0.0))
    lo = (asset.means - half).min(axis=0)
    hi = (asset.means + half).max(axis=0)
    return hi - lo


def place_asset(asset: GaussianCloud, box: Box3D) -> GaussianCloud:
    """Uniformly scale a local asset to fit the box, then pose it there.

    The scale is min over axes of box dims / asset extent (3-sigma
    footprint), applied to means and scales about the asset origin; the
    asset's local frame is +x forward, +z up, origin at the geometric
    center.
    """
    extent = asset_extent(asset)
    if extent.min() <= 1e-6:
        raise DegenerateExtent(f"asset extent {extent} is degenerate")
    s = float((box.dims / extent).min())
    scaled = replace(asset, means=asset.means * s, scales=asset.scales * s)
    return transform_local_to_box(scaled, box)


def transform_local_to_box(asset: GaussianCloud, box: Box3D) -> GaussianCloud:
    from .gaussians import transform_cloud
    return transform_cloud(asset, yaw_pose(box.yaw, box.center))


@dataclass(frozen=True)
class ClipSpec:
    object_id: str
    start: int
    num_frames: int
    camera_id: str

    @property
    def frames(self) -> list[int]:
        return list(range(self.start, self.start + self.num_frames))


class AssetStore:
    """Gaussian assets (and optional reference crops) keyed by name."""

    def __init__(self, assets: dict[str, GaussianCloud] | None = None,
                 references: dict[str, np.ndarray] | None = None):
        self._assets = dict(assets or {})
        self._references = dict(references or {})

    def add(self, name: str, cloud: GaussianCloud, reference: np.ndarray | None = None) -> None:
        self._assets[name] = cloud
        if reference is not None:
            self._references[name] = reference

    def asset(self, name: str) -> GaussianCloud:
        if name not in self._assets:
            raise MissingAsset(f"no gaussian asset named {name!r}")
        return self._assets[name]

    def has_asset(self, name: str) -> bool:
        return name in self._assets

    def reference(self, name: str) -> np.ndarray | None:
        return self._references.get(name)

    def names(self) -> list[str]:
        return sorted(self._assets)


@dataclass(frozen=True)
class ConditioningBundle:
    """Per-clip conditioning stack, already quantized to the bytes that the
    writer will persist (8-bit images, float32 depth)."""

    gaussian_video: np.ndarray   # (N, H, W, 3) uint8, object over white
    depth_boxes: np.ndarray      # (N, H, W) float32 meters, 0 = empty
    edge_masks: np.ndarray       # (N, H, W) uint8 {0, 1}
    inpaint_masks: np.ndarray    # (N, H, W) uint8 {0, 1}
    masked_video: np.ndarray     # (N, H, W, 3) uint8
    reference_image: np.ndarray  # (S, S, 3) uint8
    clip_meta: dict = field(default_factory=dict)

    @property
    def num_frames(self) -> int:
        return self.gaussian_video.shape[0]

    @property
    def image_size(self) -> tuple[int, int]:
        return self.gaussian_video.shape[1], self.gaussian_video.shape[2]


def quantize_image(img01: np.ndarray) -> np.ndarray:
    """[0, 1] float image to uint8 bytes (round-half-even, like the writer)."""
    return np.round(np.clip(img01, 0.0, 1.0) * 255.0).astype(np.uint8)


def _asset_for(cmd: EditCommand, store: AssetStore) -> GaussianCloud:
    key = cmd.asset_ref if isinstance(cmd, Insert) else cmd.object_id
    return store.asset(key)


def _canonical_reference(asset: GaussianCloud, side: int = 256) -> np.ndarray:
    """Deterministic fallback reference: the asset rendered head-on over
    white from a canonical camera fitted to its extent."""
    from .geometry import CameraFrame, CameraIntrinsics, Pose
    extent = asset_extent(asset)
    radius = float(np.linalg.norm(extent) / 2.0)
    dist = max(4.0 * radius, 1.0)
    # Camera sits on -x looking along +x (the asset's forward axis).
    rot = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    pose = Pose(rot, np.array([-dist, 0.0, 0.0]))
    f = side * dist / (3.0 * radius)
    cam = CameraFrame(CameraIntrinsics(f, f, side / 2, side / 2, side, side),
                      pose, 0, "reference")
    from .gaussians import transform_cloud
    world = transform_cloud(asset, Pose.identity())
    return quantize_image(composite_over_white(render(world, cam)))


def _reference_for(cmd: EditCommand, layout: SceneLayout, clip: ClipSpec,
                   store: AssetStore, source_frames: list[np.ndarray]) -> np.ndarray:
    """Reference policy: Delete -> white; otherwise an explicit store
    reference, else a crop of the object from the source frame with the
    largest temporal distance to the clip start (falling back across frames
    by distance), else the canonical asset render."""
    if isinstance(cmd, Delete):
        side = 256
        return np.full((side, side, 3), 255, dtype=np.uint8)
    key = cmd.asset_ref if isinstance(cmd, Insert) else cmd.object_id
    explicit = store.reference(key)
    if explicit is not None:
        return explicit
    if isinstance(cmd, Reposition):
        track = layout.track(cmd.object_id)
        cam_ok = [f for f in clip.frames if layout.has_camera(f, clip.camera_id)]
        by_distance = sorted(cam_ok, key=lambda i: (-abs(i - clip.start), i))
        for f in by_distance:
            box = track.boxes.get(f)
            if box is None:
                continue
            cam = layout.camera(f, clip.camera_id)
            try:
                crop = dataprep.crop_reference(source_frames[f - clip.start], box, cam)
            except (dataprep.NotFullyVisible, dataprep.CropExceedsImage):
                continue
            return quantize_image(crop)
    return _canonical_reference(_asset_for(cmd, store))


def build_bundle(layout: SceneLayout, cmd: EditCommand, clip: ClipSpec,
                 store: AssetStore, source_frames: list[np.ndarray],
                 mask_pad_frac: float = dataprep.DEFAULT_PAD_FRAC,
                 mask_min_pad_px: float = dataprep.DEFAULT_MIN_PAD_PX,
                 render_config: RenderConfig | None = None) -> ConditioningBundle:
    """Build the conditioning stack for one clip of one edit.

    layout is the pre-edit scene; the edit is applied internally. The
    gaussian video renders the placed asset at the edited pose over white
    (all-white for Delete, as is the reference). Depth boxes and edge masks
    come from the edited scene. The inpainting mask is the enlarged
    projected box of the edited object, unioned with its pre-edit box for
    Reposition so the vacated pixels are inpainted too. source_frames are
    the clip's original RGB frames in [0, 1], one per clip frame.
    """
    if len(source_frames) != clip.num_frames:
        raise ValueError("need one source frame per clip frame")
    cfg = render_config or RenderConfig()
    edited = apply_edit(layout, cmd)
    target_id = edited_object_id(cmd)

    asset = None
    if not isinstance(cmd, Delete):
        asset = _asset_for(cmd, store)
        if len(asset) == 0:
            raise EmptyAsset("edited object's asset is empty")
        track = edited.track(target_id)

    n = clip.num_frames
    first_cam = layout.camera(clip.start, clip.camera_id)
    h, w = first_cam.intrinsics.height, first_cam.intrinsics.width
    vg = np.zeros((n, h, w, 3), dtype=np.uint8)
    db = np.zeros((n, h, w), dtype=np.float32)
    mb = np.zeros((n, h, w), dtype=np.uint8)
    masks = np.zeros((n, h, w), dtype=np.uint8)
    vbg = np.zeros((n, h, w, 3), dtype=np.uint8)

    for i, f in enumerate(clip.frames):
        cam = edited.camera(f, clip.camera_id)
        if isinstance(cmd, Delete):
            vg[i] = 255
        else:
            box = track.boxes.get(f)
            if box is not None:
                placed = place_asset(asset, box)
                vg[i] = quantize_image(composite_over_white(render(placed, cam, cfg)))
            else:
                vg[i] = 255
        db[i] = render_depth_boxes(edited, f, clip.camera_id).astype(np.float32)
        mb[i] = render_edge_mask(edited, f, clip.camera_id)

        mask = np.zeros((h, w), dtype=np.uint8)
        mask_boxes = []
        if not isinstance(cmd, Delete):
            mask_boxes.append(edited.track(target_id).boxes.get(f))
        if not isinstance(cmd, Insert):
            mask_boxes.append(layout.track(cmd.object_id).boxes.get(f))
        for b in mask_boxes:
            if b is None:
                continue
            try:
                mask |= dataprep.make_mask(b, cam, mask_pad_frac, mask_min_pad_px)
            except FullyBehindCamera:
                continue
        masks[i] = mask
        vbg[i] = quantize_image(dataprep.gray_out(source_frames[i], mask))

    reference = _reference_for(cmd, layout, clip, store, source_frames)
    meta = {
        "object_id": target_id,
        "start_frame": clip.start,
        "num_frames": clip.num_frames,
        "camera_id": clip.camera_id,
        "image_size": [h, w],
        "mask_pad_frac": mask_pad_frac,
        "mask_min_pad_px": mask_min_pad_px,
        "edit": describe_edit(cmd),
    }
    return ConditioningBundle(vg, db, mb, masks, vbg, reference, meta)


def describe_edit(cmd: EditCommand) -> dict:
    if isinstance(cmd, Reposition):
        return {"type": "reposition", "object_id": cmd.object_id,
                "delta_yaw": cmd.delta_yaw,
                "delta_t_local": [float(v) for v in cmd.delta_t_local]}
    if isinstance(cmd, Insert):
        return {"type": "insert", "asset_ref": cmd.asset_ref,
                "object_id": inserted_object_id(cmd)}
    return {"type": "delete", "object_id": cmd.object_id}


# --- channel stack -----------------------------------------------------------

LATENT_DOWNSAMPLE = 8

CHANNEL_NAMES = (
    "noise:0", "noise:1", "noise:2", "noise:3",
    "masked_video:0", "masked_video:1", "masked_video:2", "masked_video:3",
    "inpaint_mask",
    "gaussian_video:0", "gaussian_video:1", "gaussian_video:2", "gaussian_video:3",
    "edge_mask",
)


@dataclass(frozen=True)
class ChannelStack:
    tensor: np.ndarray                    # (N, 14, H/8, W/8) float32
    channel_names: tuple[str, ...] = CHANNEL_NAMES


def _block_mean(img: np.ndarray) -> np.ndarray:
    """8x8 average pooling of an (H, W) or (H, W, C) float64 array."""
    h, w = img.shape[:2]
    d = LATENT_DOWNSAMPLE
    if img.ndim == 2:
        return img.reshape(h // d, d, w // d, d).mean(axis=(1, 3))
    return img.reshape(h // d, d, w // d, d, img.shape[2]).mean(axis=(1, 3))


def mock_encode(rgb01: np.ndarray) -> np.ndarray:
    """VAE stand-in: 8x8 average pooling then the fixed 3-to-4 map whose
    rows are (1,0,0), (0,1,0), (0,0,1), (1/3,1/3,1/3). Returns (4, h, w)."""
    pooled = _block_mean(np.asarray(rgb01, dtype=np.float64))
    r, g, b = pooled[:, :, 0], pooled[:, :, 1], pooled[:, :, 2]
    return np.stack([r, g, b, (r + g + b) / 3.0], axis=0)


def assemble_channel_stack(bundle: ConditioningBundle) -> ChannelStack:
    """Pack the bundle into the (N, 14, H/8, W/8) latent-resolution tensor.

    Channel layout: [0..4) zeros (noise slot), [4..8) encoded masked video,
    [8..9) pooled inpainting mask, [9..13) encoded gaussian video, [13..14)
    pooled edge mask. Channels [4..14) are exact deterministic functions of
    the stored bundle bytes.
    """
    n, (h, w) = bundle.num_frames, bundle.image_size
    d = LATENT_DOWNSAMPLE
    if h % d or w % d:
        raise DimensionNotDivisible(f"image {h}x{w} not divisible by {d}")
    out = np.zeros((n, len(CHANNEL_NAMES), h // d, w // d), dtype=np.float64)
    for i in range(n):
        out[i, 4:8] = mock_encode(bundle.masked_video[i].astype(np.float64) / 255.0)
        out[i, 8] = _block_mean(bundle.inpaint_masks[i].astype(np.float64))
        out[i, 9:13] = mock_encode(bundle.gaussian_video[i].astype(np.float64) / 255.0)
        out[i, 13] = _block_mean(bundle.edge_masks[i].astype(np.float64))
    return ChannelStack(out.astype(np.float32))

"""Scene JSON format: cameras plus object box tracks.

The file is self-contained and declares its geometric conventions in a
header block so extrinsics are never guessed. Serialization is canonical
(sorted keys, two-space indent, shortest round-trip float decimals), so
parse -> serialize reproduces a canonical file byte for byte.
"""

from __future__ import annotations

import json
import logging

import numpy as np

from .errors import SceneFormatError
from .geometry import CameraFrame, CameraIntrinsics, Pose
from .layout import Box3D, ObjectClass, ObjectTrack, SceneLayout

logger = logging.getLogger(__name__)

SCENE_VERSION = 1
CONVENTION = {"camera": "+z forward,+y down", "yaw_zero": "+x"}

_TOP_KEYS = {"version", "convention", "num_frames", "cameras", "tracks"}
_CAMERA_KEYS = {"frame", "camera_id", "intrinsics", "cam_to_world"}
_INTR_KEYS = {"fx", "fy", "cx", "cy", "width", "height"}
_TRACK_KEYS = {"object_id", "class", "boxes"}
_BOX_KEYS = {"frame", "center", "dims", "yaw"}


def _check_keys(obj: dict, allowed: set[str], where: str, strict: bool) -> None:
    unknown = set(obj) - allowed
    if unknown:
        msg = f"unknown field(s) {sorted(unknown)} in {where}"
        if strict:
            raise SceneFormatError(msg)
        logger.warning("%s (ignored)", msg)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SceneFormatError(f"missing field {key!r} in {where}")
    return obj[key]


def _orthonormalized(R: np.ndarray) -> np.ndarray:
    """Accept matrices within 1e-6 of a rotation; snap to the nearest one
    only when they are not already exact to 1e-9, so canonical files round
    trip bit for bit."""
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err <= 1e-9:
        return R
    if err > 1e-6:
        raise SceneFormatError(f"cam_to_world rotation off by {err:.2e} (tolerance 1e-6)")
    u, _, vt = np.linalg.svd(R)
    snapped = u @ vt
    if np.linalg.det(snapped) < 0:
        raise SceneFormatError("cam_to_world rotation is a reflection")
    return snapped


def parse_scene(text: str, strict: bool = False) -> SceneLayout:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise SceneFormatError("top level must be an object")
    _check_keys(doc, _TOP_KEYS, "scene", strict)
    if _require(doc, "version", "scene") != SCENE_VERSION:
        raise SceneFormatError(f"unsupported version {doc['version']!r}")
    conv = _require(doc, "convention", "scene")
    if conv != CONVENTION:
        raise SceneFormatError(f"convention {conv!r} does not match {CONVENTION!r}")
    num_frames = _require(doc, "num_frames", "scene")
    if not isinstance(num_frames, int) or num_frames < 0:
        raise SceneFormatError("num_frames must be a non-negative integer")

    cameras: dict[tuple[int, str], CameraFrame] = {}
    for i, cam_doc in enumerate(_require(doc, "cameras", "scene")):
        where = f"cameras[{i}]"
        _check_keys(cam_doc, _CAMERA_KEYS, where, strict)
        intr_doc = _require(cam_doc, "intrinsics", where)
        _check_keys(intr_doc, _INTR_KEYS, f"{where}.intrinsics", strict)
        try:
            intr = CameraIntrinsics(
                fx=float(_require(intr_doc, "fx", where)),
                fy=float(_require(intr_doc, "fy", where)),
                cx=float(_require(intr_doc, "cx", where)),
                cy=float(_require(intr_doc, "cy", where)),
                width=int(_require(intr_doc, "width", where)),
                height=int(_require(intr_doc, "height", where)),
            )
        except ValueError as e:
            raise SceneFormatError(f"{where}: {e}") from None
        m = _require(cam_doc, "cam_to_world", where)
        if not isinstance(m, list) or len(m) != 16:
            raise SceneFormatError(f"{where}.cam_to_world must be 16 row-major floats")
        mat = np.array(m, dtype=np.float64).reshape(4, 4)
        if not np.allclose(mat[3], [0, 0, 0, 1], atol=1e-9):
            raise SceneFormatError(f"{where}.cam_to_world bottom row must be 0 0 0 1")
        rot = _orthonormalized(mat[:3, :3])
        frame = int(_require(cam_doc, "frame", where))
        cam_id = str(_require(cam_doc, "camera_id", where))
        key = (frame, cam_id)
        if key in cameras:
            raise SceneFormatError(f"duplicate camera for frame {frame}, id {cam_id!r}")
        try:
            cameras[key] = CameraFrame(intr, Pose(rot, mat[:3, 3]), frame, cam_id)
        except ValueError as e:
            raise SceneFormatError(f"{where}: {e}") from None

    tracks: list[ObjectTrack] = []
    for i, tr_doc in enumerate(_require(doc, "tracks", "scene")):
        where = f"tracks[{i}]"
        _check_keys(tr_doc, _TRACK_KEYS, where, strict)
        try:
            cls = ObjectClass(_require(tr_doc, "class", where))
        except ValueError:
            raise SceneFormatError(f"{where}: unknown class {tr_doc.get('class')!r}") from None
        boxes: dict[int, Box3D] = {}
        for j, box_doc in enumerate(_require(tr_doc, "boxes", where)):
            bwhere = f"{where}.boxes[{j}]"
            _check_keys(box_doc, _BOX_KEYS, bwhere, strict)
            frame = int(_require(box_doc, "frame", bwhere))
            if frame in boxes:
                raise SceneFormatError(f"{bwhere}: duplicate frame {frame}")
            try:
                boxes[frame] = Box3D(
                    center=np.array(_require(box_doc, "center", bwhere), dtype=np.float64),
                    dims=np.array(_require(box_doc, "dims", bwhere), dtype=np.float64),
                    yaw=float(_require(box_doc, "yaw", bwhere)),
                )
            except ValueError as e:
                raise SceneFormatError(f"{bwhere}: {e}") from None
        tracks.append(ObjectTrack(str(_require(tr_doc, "object_id", where)), cls, boxes))

    try:
        layout = SceneLayout(num_frames=num_frames, cameras=cameras, tracks=tracks)
    except ValueError as e:
        raise SceneFormatError(str(e)) from None
    referenced = {f for t in tracks for f in t.boxes}
    with_cams = {f for f, _ in cameras}
    missing = referenced - with_cams
    if missing:
        raise SceneFormatError(f"frames {sorted(missing)} have boxes but no camera")
    return layout


def serialize_scene(layout: SceneLayout) -> str:
    cams = []
    for (frame, cam_id) in sorted(layout.cameras):
        cam = layout.cameras[(frame, cam_id)]
        k = cam.intrinsics
        cams.append({
            "frame": frame,
            "camera_id": cam_id,
            "intrinsics": {"fx": float(k.fx), "fy": float(k.fy), "cx": float(k.cx),
                           "cy": float(k.cy), "width": k.width, "height": k.height},
            "cam_to_world": [float(v) for v in cam.cam_to_world.matrix().reshape(-1)],
        })
    tracks = []
    for t in sorted(layout.tracks, key=lambda t: t.object_id):
        tracks.append({
            "object_id": t.object_id,
            "class": t.object_class.value,
            "boxes": [{"frame": f,
                       "center": [float(v) for v in t.boxes[f].center],
                       "dims": [float(v) for v in t.boxes[f].dims],
                       "yaw": float(t.boxes[f].yaw)}
                      for f in sorted(t.boxes)],
        })
    doc = {"version": SCENE_VERSION, "convention": CONVENTION,
           "num_frames": layout.num_frames, "cameras": cams, "tracks": tracks}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def load_scene(path, strict: bool = False) -> SceneLayout:
    from pathlib import Path
    return parse_scene(Path(path).read_text(), strict=strict)


def save_scene(path, layout: SceneLayout) -> None:
    from .imgio import atomic_write_bytes
    atomic_write_bytes(path, serialize_scene(layout).encode("utf-8"))

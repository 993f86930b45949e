"""Scene-level 3D box tracks and the rasterizers driven by them.

Boxes are 7-DoF: center, (length, width, height), and yaw about world up
with yaw = 0 facing world +x and length along the heading. The depth-aware
box image interpolates camera-space corner depths linearly in screen space
(a coarse conditioning prior, not a perspective-correct depth map).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingCamera, ObjectAbsent
from .geometry import NEAR_PLANE, CameraFrame, project_points, world_to_camera, wrap_angle


class ObjectClass(str, enum.Enum):
    VEHICLE = "Vehicle"
    PEDESTRIAN = "Pedestrian"
    CYCLIST = "Cyclist"
    OTHER = "Other"


@dataclass(frozen=True)
class Box3D:
    center: np.ndarray           # (3,) world meters
    dims: np.ndarray             # (length, width, height), > 0
    yaw: float                   # radians, wrapped to (-pi, pi]

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        d = np.asarray(self.dims, dtype=np.float64).reshape(3)
        if d.min() <= 0:
            raise ValueError("box dims must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "dims", d)
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))


@dataclass(frozen=True)
class ObjectTrack:
    object_id: str
    object_class: ObjectClass
    boxes: dict[int, Box3D]      # frame index -> box; absent = not present

    def __post_init__(self):
        if not self.object_id:
            raise ValueError("object_id must be nonempty")
        if any(f < 0 for f in self.boxes):
            raise ValueError("frame indices must be non-negative")


@dataclass(frozen=True)
class SceneLayout:
    num_frames: int
    cameras: dict[tuple[int, str], CameraFrame]
    tracks: list[ObjectTrack] = field(default_factory=list)

    def __post_init__(self):
        ids = [t.object_id for t in self.tracks]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique within a layout")
        for t in self.tracks:
            if t.boxes and max(t.boxes) >= self.num_frames:
                raise ValueError(f"track {t.object_id!r} references frame >= num_frames")

    def camera(self, frame: int, camera_id: str) -> CameraFrame:
        cam = self.cameras.get((frame, camera_id))
        if cam is None:
            raise MissingCamera(f"no camera {camera_id!r} for frame {frame}")
        return cam

    def has_camera(self, frame: int, camera_id: str) -> bool:
        return (frame, camera_id) in self.cameras

    def track(self, object_id: str) -> ObjectTrack:
        for t in self.tracks:
            if t.object_id == object_id:
                return t
        raise ObjectAbsent(f"no track with id {object_id!r}")

    def camera_ids(self) -> list[str]:
        return sorted({cid for _, cid in self.cameras})


# Corner order: bottom face counter-clockwise seen from above starting at
# front-left, then the top face in the same order.
#   0 front-left-bottom   1 rear-left-bottom   2 rear-right-bottom
#   3 front-right-bottom  4..7 same with +h/2
_CORNER_SIGNS = np.array([
    [+1, +1, -1], [-1, +1, -1], [-1, -1, -1], [+1, -1, -1],
    [+1, +1, +1], [-1, +1, +1], [-1, -1, +1], [+1, -1, +1],
], dtype=np.float64)

# Quads of corner indices, one per box face.
FACES = (
    (0, 1, 2, 3),   # bottom
    (4, 5, 6, 7),   # top
    (0, 3, 7, 4),   # front (+x)
    (1, 0, 4, 5),   # left (+y)
    (2, 1, 5, 6),   # rear (-x)
    (3, 2, 6, 7),   # right (-y)
)

# The 12 wireframe edges as corner-index pairs.
EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


def box_corners(box: Box3D) -> np.ndarray:
    """(8, 3) world-space corners in the documented order."""
    half = _CORNER_SIGNS * (box.dims / 2.0)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return half @ rot.T + box.center


def _pinhole(cam_pts: np.ndarray, cam: CameraFrame) -> np.ndarray:
    k = cam.intrinsics
    z = cam_pts[:, 2]
    return np.stack([k.fx * cam_pts[:, 0] / z + k.cx,
                     k.fy * cam_pts[:, 1] / z + k.cy], axis=1)


def _raster_triangle(zbuf: np.ndarray, uv: np.ndarray, z: np.ndarray) -> None:
    """Min-z rasterization of one triangle with screen-linear depth."""
    h, w = zbuf.shape
    (x0, y0), (x1, y1), (x2, y2) = uv
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    if abs(area) < 1e-12:
        return
    cx0 = max(0, int(math.ceil(min(x0, x1, x2))))
    cx1 = min(w - 1, int(math.floor(max(x0, x1, x2))))
    cy0 = max(0, int(math.ceil(min(y0, y1, y2))))
    cy1 = min(h - 1, int(math.floor(max(y0, y1, y2))))
    if cx0 > cx1 or cy0 > cy1:
        return
    xs = np.arange(cx0, cx1 + 1, dtype=np.float64)
    ys = np.arange(cy0, cy1 + 1, dtype=np.float64)
    px = xs[None, :]
    py = ys[:, None]
    l0 = ((x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)) / area
    l1 = ((x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)) / area
    l2 = ((x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)) / area
    # Inclusive edges with a hair of slack so the two triangles of a quad
    # leave no crack along their shared diagonal.
    inside = (l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9)
    depth = l0 * z[0] + l1 * z[1] + l2 * z[2]
    region = zbuf[cy0:cy1 + 1, cx0:cx1 + 1]
    np.copyto(region, depth, where=inside & (depth < region))


def render_depth_boxes(layout: SceneLayout, frame: int, camera_id: str) -> np.ndarray:
    """Depth-aware box image: per-pixel nearest interpolated face depth.

    Every face of every box present in the frame is projected corner-wise,
    split into two triangles, and filled with barycentric interpolation of
    the camera-space corner depths; a z-buffer keeps the smallest depth.
    Faces with any corner behind the near plane are skipped. Pixels covered
    by no face are 0.
    """
    cam = layout.camera(frame, camera_id)
    k = cam.intrinsics
    zbuf = np.full((k.height, k.width), np.inf)
    for track in layout.tracks:
        box = track.boxes.get(frame)
        if box is None:
            continue
        cam_pts = world_to_camera(box_corners(box), cam)
        for face in FACES:
            z = cam_pts[list(face), 2]
            if (z <= NEAR_PLANE).any():
                continue
            uv = _pinhole(cam_pts[list(face)], cam)
            _raster_triangle(zbuf, uv[[0, 1, 2]], z[[0, 1, 2]])
            _raster_triangle(zbuf, uv[[0, 2, 3]], z[[0, 2, 3]])
    return np.where(np.isfinite(zbuf), zbuf, 0.0)


def _draw_segment(mask: np.ndarray, a: np.ndarray, b: np.ndarray, thickness: float) -> None:
    h, w = mask.shape
    r = thickness / 2.0
    x0 = max(0, int(math.floor(min(a[0], b[0]) - r)))
    x1 = min(w - 1, int(math.ceil(max(a[0], b[0]) + r)))
    y0 = max(0, int(math.floor(min(a[1], b[1]) - r)))
    y1 = min(h - 1, int(math.ceil(max(a[1], b[1]) + r)))
    if x0 > x1 or y0 > y1:
        return
    xs = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
    ys = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
    d = b - a
    len2 = float(d @ d)
    if len2 < 1e-12:
        t = np.zeros((y1 - y0 + 1, x1 - x0 + 1))
    else:
        t = np.clip(((xs - a[0]) * d[0] + (ys - a[1]) * d[1]) / len2, 0.0, 1.0)
    dist2 = (xs - (a[0] + t * d[0])) ** 2 + (ys - (a[1] + t * d[1])) ** 2
    mask[y0:y1 + 1, x0:x1 + 1] |= dist2 <= r * r


def render_edge_mask(layout: SceneLayout, frame: int, camera_id: str,
                     thickness: float = 2.0) -> np.ndarray:
    """Binary wireframe mask of every box in the frame.

    Each of the 12 box edges is drawn as a segment of the given pixel
    thickness between projected corners; edges with one endpoint behind the
    near plane are clipped at the near plane first, edges fully behind are
    dropped. Returns an (H, W) uint8 array of {0, 1}.
    """
    cam = layout.camera(frame, camera_id)
    k = cam.intrinsics
    mask = np.zeros((k.height, k.width), dtype=bool)
    eps = 1e-9
    for track in layout.tracks:
        box = track.boxes.get(frame)
        if box is None:
            continue
        cam_pts = world_to_camera(box_corners(box), cam)
        for i, j in EDGES:
            p0, p1 = cam_pts[i].copy(), cam_pts[j].copy()
            if p0[2] <= NEAR_PLANE and p1[2] <= NEAR_PLANE:
                continue
            if p0[2] <= NEAR_PLANE or p1[2] <= NEAR_PLANE:
                t = (NEAR_PLANE + eps - p0[2]) / (p1[2] - p0[2])
                clipped = p0 + t * (p1 - p0)
                if p0[2] <= NEAR_PLANE:
                    p0 = clipped
                else:
                    p1 = clipped
            uv = _pinhole(np.stack([p0, p1]), cam)
            _draw_segment(mask, uv[0], uv[1], thickness)
    return mask.astype(np.uint8)


def neighbors_within(layout: SceneLayout, frame: int, object_id: str,
                     radius: float) -> int:
    """Count other objects whose box center lies within the given horizontal
    (x, y) distance of the target's center in this frame."""
    target = layout.track(object_id).boxes.get(frame)
    if target is None:
        raise ObjectAbsent(f"{object_id!r} has no box in frame {frame}")
    n = 0
    for t in layout.tracks:
        if t.object_id == object_id:
            continue
        box = t.boxes.get(frame)
        if box is None:
            continue
        if math.hypot(box.center[0] - target.center[0],
                      box.center[1] - target.center[1]) <= radius:
            n += 1
    return n


@dataclass(frozen=True)
class ClipParams:
    """Clip eligibility rules. An object qualifies in a frame when its box
    exists, the camera exists, every corner is in front of the near plane,
    the projected bounding rectangle is at least min_height_px tall and
    intersects the image, and fewer than max_neighbors other objects sit
    within neighbor_radius_m horizontally."""

    n_frames: int = 10
    min_height_px: float = 40.0
    max_neighbors: int = 2
    neighbor_radius_m: float = 3.0


def _frame_eligible(layout: SceneLayout, track: ObjectTrack, frame: int,
                    camera_id: str, params: ClipParams) -> bool:
    box = track.boxes.get(frame)
    if box is None or not layout.has_camera(frame, camera_id):
        return False
    cam = layout.camera(frame, camera_id)
    uv, z = project_points(box_corners(box), cam)
    if (z <= NEAR_PLANE).any():
        return False
    height = uv[:, 1].max() - uv[:, 1].min()
    if height < params.min_height_px:
        return False
    k = cam.intrinsics
    if uv[:, 0].max() < 0 or uv[:, 0].min() > k.width - 1:
        return False
    if uv[:, 1].max() < 0 or uv[:, 1].min() > k.height - 1:
        return False
    return neighbors_within(layout, frame, track.object_id,
                            params.neighbor_radius_m) < params.max_neighbors


def select_clips(layout: SceneLayout, camera_id: str,
                 params: ClipParams | None = None) -> list[tuple[str, int]]:
    """All (object_id, start_frame) windows of n_frames consecutive eligible
    frames. Overlapping windows are all returned; deduplication is left to
    callers. Output is sorted by (object_id, start) and therefore invariant
    to track order."""
    params = params or ClipParams()
    if params.n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    out: list[tuple[str, int]] = []
    for track in sorted(layout.tracks, key=lambda t: t.object_id):
        ok = [_frame_eligible(layout, track, f, camera_id, params)
              for f in range(layout.num_frames)]
        for start in range(layout.num_frames - params.n_frames + 1):
            if all(ok[start:start + params.n_frames]):
                out.append((track.object_id, start))
    return out

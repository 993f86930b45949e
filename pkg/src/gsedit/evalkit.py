"""Longitudinal-error-tolerant detection matching and metrics.

Detections are forgiven bounded depth error along the camera line of sight:
each detection is translated along the ray to the ground-truth center
before the IoU gate. Three averages are reported: the plain match-quality
AP, a heading-weighted variant, and a longitudinal-affinity-weighted
variant whose weight stacks on the heading weight so the three are always
ordered. Also exports the 512x512 appearance crops used by external
perceptual metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataprep import crop_reference
from .errors import CropExceedsImage, DegenerateRange, NoGroundTruth, NotFullyVisible, NotVisible
from .geometry import NEAR_PLANE, CameraFrame, project_points, wrap_angle
from .layout import Box3D, ObjectClass, box_corners


@dataclass(frozen=True)
class Detection:
    box: Box3D
    score: float
    object_class: ObjectClass = ObjectClass.VEHICLE

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("score must lie in [0, 1]")


@dataclass(frozen=True)
class EvalConfig:
    lon_tolerance_frac: float = 0.05
    iou_threshold: float = 0.5
    restrict_to_edited: bool = True

    def __post_init__(self):
        if self.lon_tolerance_frac <= 0:
            raise ValueError("lon_tolerance_frac must be positive")
        if not (0 < self.iou_threshold <= 1):
            raise ValueError("iou_threshold must lie in (0, 1]")


def let_align(det: Box3D, gt: Box3D, cam_center: np.ndarray) -> tuple[Box3D, float, float]:
    """Project out the detection's longitudinal error along the camera ray.

    Returns (aligned detection, signed longitudinal error in meters, range
    to the ground truth in meters). Only the center moves; dims and yaw are
    unchanged.
    """
    cam_center = np.asarray(cam_center, dtype=np.float64).reshape(3)
    ray = gt.center - cam_center
    rng = float(np.linalg.norm(ray))
    if rng < 0.5:
        raise DegenerateRange(f"ground truth {rng:.3f} m from camera")
    u = ray / rng
    lon = float((det.center - gt.center) @ u)
    aligned = Box3D(center=det.center - lon * u, dims=det.dims, yaw=det.yaw)
    return aligned, lon, rng


def _bev_corners(box: Box3D) -> np.ndarray:
    """(4, 2) footprint corners, counter-clockwise."""
    l, w = box.dims[0] / 2.0, box.dims[1] / 2.0
    pts = np.array([[+l, +w], [-l, +w], [-l, -w], [+l, -w]])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T + box.center[:2]


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon by a convex clip polygon (CCW)."""
    poly = [tuple(p) for p in subject]
    m = len(clip)
    for i in range(m):
        if not poly:
            break
        a, b = clip[i], clip[(i + 1) % m]
        ex, ey = b[0] - a[0], b[1] - a[1]
        out: list[tuple[float, float]] = []
        n = len(poly)
        for j in range(n):
            p, q = poly[j], poly[(j + 1) % n]
            side_p = ex * (p[1] - a[1]) - ey * (p[0] - a[0])
            side_q = ex * (q[1] - a[1]) - ey * (q[0] - a[0])
            if side_p >= 0:
                out.append(p)
            if (side_p >= 0) != (side_q >= 0):
                t = side_p / (side_p - side_q)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        poly = out
    return np.array(poly) if poly else np.zeros((0, 2))


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def iou3d(a: Box3D, b: Box3D) -> float:
    """3D IoU: rotated footprint intersection times vertical overlap over
    the union of volumes."""
    inter_poly = _clip_polygon(_bev_corners(a), _bev_corners(b))
    bev = _polygon_area(inter_poly)
    za0, za1 = a.center[2] - a.dims[2] / 2.0, a.center[2] + a.dims[2] / 2.0
    zb0, zb1 = b.center[2] - b.dims[2] / 2.0, b.center[2] + b.dims[2] / 2.0
    dz = max(0.0, min(za1, zb1) - max(za0, zb0))
    inter = bev * dz
    vol_a = float(np.prod(a.dims))
    vol_b = float(np.prod(b.dims))
    return inter / (vol_a + vol_b - inter)


@dataclass(frozen=True)
class Match:
    score: float
    lon_error: float
    range_m: float
    heading_error: float   # |wrapped yaw difference|, in [0, pi]
    tolerance: float       # lon_tolerance_frac * range, meters
    iou: float

    @property
    def heading_weight(self) -> float:
        return 1.0 - self.heading_error / math.pi

    @property
    def lon_affinity(self) -> float:
        return 1.0 - min(abs(self.lon_error), self.tolerance) / self.tolerance


@dataclass
class MatchSet:
    """Matching outcome of one evaluation unit (a clip, or a whole run)."""

    matches: list[Match] = field(default_factory=list)
    fp_scores: list[float] = field(default_factory=list)
    num_gt: int = 0

    def merge(self, other: "MatchSet") -> "MatchSet":
        return MatchSet(self.matches + other.matches,
                        self.fp_scores + other.fp_scores,
                        self.num_gt + other.num_gt)


def match_frame(dets: list[Detection], gts: list[Box3D], cfg: EvalConfig,
                cam: CameraFrame) -> MatchSet:
    """Greedy one-to-one matching of a frame's detections to ground truths.

    A pair qualifies when |longitudinal error| <= tolerance * range and the
    aligned IoU clears the threshold. Detections are taken in descending
    score order (ties by input index) and claim the qualifying ground truth
    of highest aligned IoU.
    """
    center = cam.optical_center
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    taken = [False] * len(gts)
    out = MatchSet(num_gt=len(gts))
    for di in order:
        det = dets[di]
        best: tuple[float, int, Match] | None = None
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            try:
                aligned, lon, rng = let_align(det.box, gt, center)
            except DegenerateRange:
                continue
            tol = cfg.lon_tolerance_frac * rng
            if abs(lon) > tol:
                continue
            iou = iou3d(aligned, gt)
            if iou < cfg.iou_threshold:
                continue
            if best is None or iou > best[0]:
                heading = abs(wrap_angle(det.box.yaw - gt.yaw))
                best = (iou, gi, Match(det.score, lon, rng, heading, tol, iou))
        if best is None:
            out.fp_scores.append(det.score)
        else:
            taken[best[1]] = True
            out.matches.append(best[2])
    return out


@dataclass(frozen=True)
class MetricsReport:
    let_map: float
    let_maph: float
    let_mapl: float
    tp: int
    fp: int
    fn: int
    per_clip: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"let_map": self.let_map, "let_maph": self.let_maph,
                "let_mapl": self.let_mapl,
                "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn},
                "per_clip": self.per_clip}


def _average_precision(scores: np.ndarray, weights: np.ndarray,
                       fp_scores: np.ndarray, num_gt: int) -> float:
    """Area under the precision-recall curve, trapezoidal on recall.

    The weighted true-positive count replaces the raw count wherever it
    appears, so precision = W / (W + FP) and recall = W / num_gt.
    """
    thresholds = np.unique(np.concatenate([scores, fp_scores]))[::-1]
    if len(thresholds) == 0:
        return 0.0
    recalls = [0.0]
    precisions = []
    for th in thresholds:
        w = float(weights[scores >= th].sum())
        nfp = int((fp_scores >= th).sum())
        denom = w + nfp
        precisions.append(w / denom if denom > 0 else 0.0)
        recalls.append(w / num_gt)
    r = np.array(recalls)
    p = np.array([precisions[0]] + precisions)
    return float(np.sum((r[1:] - r[:-1]) * (p[1:] + p[:-1]) / 2.0))


def _set_metrics(ms: MatchSet) -> tuple[float, float, float]:
    scores = np.array([m.score for m in ms.matches], dtype=np.float64)
    fp_scores = np.array(ms.fp_scores, dtype=np.float64)
    ones = np.ones(len(ms.matches))
    heading = np.array([m.heading_weight for m in ms.matches], dtype=np.float64)
    # The longitudinal weight stacks on the heading weight so each
    # successive metric only reduces credit.
    lon = heading * np.array([m.lon_affinity for m in ms.matches], dtype=np.float64)
    ap = _average_precision(scores, ones, fp_scores, ms.num_gt)
    aph = _average_precision(scores, heading, fp_scores, ms.num_gt)
    apl = _average_precision(scores, lon, fp_scores, ms.num_gt)
    return ap, aph, apl


def compute_metrics(sets: dict[str, MatchSet] | MatchSet) -> MetricsReport:
    """Pool match sets into one report with a per-clip breakdown.

    Raises NoGroundTruth when no ground-truth box exists anywhere.
    """
    named = sets if isinstance(sets, dict) else {"all": sets}
    pooled = MatchSet()
    for ms in named.values():
        pooled = pooled.merge(ms)
    if pooled.num_gt == 0:
        raise NoGroundTruth("no ground-truth boxes across clips")
    ap, aph, apl = _set_metrics(pooled)
    per_clip = {}
    for name, ms in sorted(named.items()):
        entry: dict = {"num_gt": ms.num_gt, "tp": len(ms.matches),
                       "fp": len(ms.fp_scores),
                       "fn": ms.num_gt - len(ms.matches)}
        if ms.matches:
            entry["mean_abs_lon_error"] = float(np.mean([abs(m.lon_error) for m in ms.matches]))
            entry["mean_heading_error"] = float(np.mean([m.heading_error for m in ms.matches]))
        per_clip[name] = entry
    return MetricsReport(ap, aph, apl, tp=len(pooled.matches),
                         fp=len(pooled.fp_scores),
                         fn=pooled.num_gt - len(pooled.matches),
                         per_clip=per_clip)


# --- appearance crops ----------------------------------------------------------

def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-anchored bilinear resize: corner pixels map to corner pixels,
    and same-size resizing is the identity."""
    src = np.asarray(img, dtype=np.float64)
    h, w = src.shape[:2]
    ys = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if src.ndim == 3:
        fy = fy[:, :, None]
        fx = fx[:, :, None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def crop_eval_region(frame: np.ndarray, box: Box3D, cam: CameraFrame,
                     out_size: int = 512) -> np.ndarray:
    """Square region around the edited object, resized to out_size^2.

    Uses the same square-crop geometry as the reference crops when the
    object is fully visible; for partially visible boxes the bounding
    rectangle of the in-front corners is used, clamped to the image.
    Raises NotVisible when the box projects entirely off-image or behind
    the camera.
    """
    img = np.asarray(frame, dtype=np.float64)
    h, w = img.shape[:2]
    try:
        crop = crop_reference(img, box, cam)
    except (NotFullyVisible, CropExceedsImage):
        uv, z = project_points(box_corners(box), cam)
        front = z > NEAR_PLANE
        if not front.any():
            raise NotVisible("box is behind the camera") from None
        uv = uv[front]
        u0, v0 = uv[:, 0].min(), uv[:, 1].min()
        u1, v1 = uv[:, 0].max(), uv[:, 1].max()
        if u1 < 0 or u0 > w - 1 or v1 < 0 or v0 > h - 1:
            raise NotVisible("box projects outside the image") from None
        side = int(round(max(u1 - u0, v1 - v0)))
        side = max(1, min(side, min(h, w)))
        x0 = int(math.floor((u0 + u1) / 2.0 - side / 2.0 + 0.5))
        y0 = int(math.floor((v0 + v1) / 2.0 - side / 2.0 + 0.5))
        x0 = min(max(x0, 0), w - side)
        y0 = min(max(y0, 0), h - side)
        crop = img[y0:y0 + side, x0:x0 + side]
    return resize_bilinear(crop, out_size, out_size)

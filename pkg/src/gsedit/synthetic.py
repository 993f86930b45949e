"""Self-contained synthetic inputs for demos and tests: a procedural
gaussian car asset, a small driving scene, deterministic backdrop frames,
and scripted detections.

Everything here is a pure function of its seed so demo outputs are
reproducible byte for byte.
"""

from __future__ import annotations

import math

import numpy as np

from .editing import EditCommand, apply_edit, edited_object_id
from .gaussians import Frame, GaussianCloud
from .geometry import CameraFrame, CameraIntrinsics, Pose
from .layout import Box3D, ObjectClass, ObjectTrack, SceneLayout

# Camera axes of a driving camera: right = -y_world, down = -z_world,
# forward = +x_world.
DRIVING_CAM_ROTATION = np.array([
    [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
])


def driving_camera(position, frame_index: int = 0, camera_id: str = "front",
                   fx: float = 800.0, width: int = 960, height: int = 640) -> CameraFrame:
    """Forward-facing pinhole camera at a world position (+x is forward)."""
    intr = CameraIntrinsics(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                            width=width, height=height)
    return CameraFrame(intr, Pose(DRIVING_CAM_ROTATION, np.asarray(position, dtype=np.float64)),
                       frame_index, camera_id)


def _box_surface_points(rng, lo, hi, count):
    """Uniform samples on the surface of an axis-aligned box."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    size = hi - lo
    areas = np.array([size[1] * size[2], size[1] * size[2],
                      size[0] * size[2], size[0] * size[2],
                      size[0] * size[1], size[0] * size[1]])
    faces = rng.choice(6, size=count, p=areas / areas.sum())
    pts = lo + rng.random((count, 3)) * size
    for axis in range(3):
        pts[faces == 2 * axis, axis] = lo[axis]
        pts[faces == 2 * axis + 1, axis] = hi[axis]
    return pts


def procedural_car(num_gaussians: int = 2000, seed: int = 7) -> GaussianCloud:
    """A car-shaped local-frame gaussian asset (+x forward, +z up, origin at
    the geometric center), roughly 4.2 x 1.9 x 1.5 m."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n_body = int(num_gaussians * 0.55)
    n_cabin = int(num_gaussians * 0.3)
    n_wheels = num_gaussians - n_body - n_cabin

    body = _box_surface_points(rng, (-2.1, -0.95, -0.75), (2.1, 0.95, 0.05), n_body)
    cabin = _box_surface_points(rng, (-1.3, -0.8, 0.05), (0.7, 0.8, 0.75), n_cabin)
    wheels = []
    per_wheel = n_wheels // 4
    centers = [(1.3, -0.95, -0.45), (1.3, 0.95, -0.45),
               (-1.3, -0.95, -0.45), (-1.3, 0.95, -0.45)]
    for wx, wy, wz in centers:
        theta = rng.random(per_wheel) * 2 * math.pi
        r = 0.3 * np.sqrt(rng.random(per_wheel))
        pts = np.stack([wx + r * np.cos(theta),
                        np.full(per_wheel, wy),
                        wz + r * np.sin(theta)], axis=1)
        wheels.append(pts)
    extra = n_wheels - 4 * per_wheel
    means = np.concatenate([body, cabin] + wheels +
                           ([body[:extra]] if extra else []), axis=0)

    n = len(means)
    body_color = np.array([0.75, 0.15, 0.12])
    colors = np.tile(body_color, (n, 1)) + rng.normal(0, 0.03, (n, 3))
    colors[n_body:n_body + n_cabin] = np.array([0.25, 0.3, 0.4]) + rng.normal(0, 0.02, (n_cabin, 3))
    colors[n_body + n_cabin:] = np.array([0.08, 0.08, 0.09]) + rng.normal(0, 0.01, (n - n_body - n_cabin, 3))
    colors = np.clip(colors, 0.0, 1.0)

    axes = rng.random((n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    ang = rng.random(n) * math.pi
    quats = np.concatenate([np.cos(ang / 2)[:, None],
                            np.sin(ang / 2)[:, None] * axes], axis=1)
    scales = rng.uniform(0.02, 0.06, (n, 3))
    opac = rng.uniform(0.75, 1.0, n)
    cloud = GaussianCloud(means, quats, scales, opac, colors, Frame.LOCAL)
    cloud.validate()
    return cloud


def demo_scene(num_frames: int = 10, camera_id: str = "front") -> SceneLayout:
    """Three parked vehicles seen from a forward-moving ego camera.

    Every object stays isolated (> 3 m from the others) and tall enough in
    the image that a full-length clip window exists for each.
    """
    cameras = {}
    for f in range(num_frames):
        cameras[(f, camera_id)] = driving_camera((0.8 * f, 0.0, 1.6), f, camera_id)

    def static_track(object_id, center, dims, yaw):
        boxes = {f: Box3D(np.array(center), np.array(dims), yaw)
                 for f in range(num_frames)}
        return ObjectTrack(object_id, ObjectClass.VEHICLE, boxes)

    tracks = [
        static_track("car", (20.0, -1.5, 0.75), (4.2, 1.9, 1.5), 0.0),
        static_track("parked1", (26.0, 3.2, 0.75), (4.4, 1.8, 1.5), 0.2),
        static_track("parked2", (33.0, -3.4, 0.9), (5.0, 2.0, 1.8), -0.15),
    ]
    return SceneLayout(num_frames=num_frames, cameras=cameras, tracks=tracks)


def render_background(cam: CameraFrame) -> np.ndarray:
    """Deterministic procedural backdrop: sky gradient above the horizon,
    a striped ground plane below. Stands in for captured video frames."""
    k = cam.intrinsics
    us = np.arange(k.width, dtype=np.float64)[None, :]
    vs = np.arange(k.height, dtype=np.float64)[:, None]
    dirs_cam = np.stack(np.broadcast_arrays(
        (us - k.cx) / k.fx, (vs - k.cy) / k.fy, np.ones((k.height, k.width))), axis=-1)
    dirs_world = dirs_cam @ cam.cam_to_world.rotation.T
    dz = dirs_world[:, :, 2]
    img = np.empty((k.height, k.width, 3))

    sky = dz >= 0
    t = np.clip(dz, 0.0, 1.0)
    img[:, :, 0] = 0.55 - 0.25 * t
    img[:, :, 1] = 0.70 - 0.20 * t
    img[:, :, 2] = 0.90 - 0.10 * t

    cam_h = cam.cam_to_world.translation[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(dz < 0, -cam_h / np.where(dz < 0, dz, -1.0), 0.0)
    gx = cam.cam_to_world.translation[0] + s * dirs_world[:, :, 0]
    gy = cam.cam_to_world.translation[1] + s * dirs_world[:, :, 1]
    stripe = 0.5 + 0.08 * np.sin(gx * 1.3) * np.cos(gy * 0.9)
    shade = np.clip(1.0 / (1.0 + 0.02 * np.abs(s)), 0.2, 1.0)
    ground = np.stack([0.45 * stripe * shade + 0.1,
                       0.42 * stripe * shade + 0.1,
                       0.38 * stripe * shade + 0.1], axis=-1)
    img[~sky] = ground[~sky]
    return np.clip(img, 0.0, 1.0)


def scripted_detections(layout: SceneLayout, cmd: EditCommand, camera_id: str,
                        frames, score: float = 1.0,
                        lon_shift_frac: float = 0.0) -> list[dict]:
    """Detection rows for the edited instance, optionally shifted along the
    camera line of sight by a fraction of range."""
    edited = apply_edit(layout, cmd)
    oid = edited_object_id(cmd)
    track = edited.track(oid)
    rows = []
    for f in frames:
        box = track.boxes.get(f)
        if box is None:
            continue
        cam = edited.camera(f, camera_id)
        center = box.center.copy()
        if lon_shift_frac:
            ray = box.center - cam.optical_center
            rng = float(np.linalg.norm(ray))
            center = center + lon_shift_frac * rng * (ray / rng)
        rows.append({
            "frame_index": f,
            "camera_id": camera_id,
            "object_id": oid,
            "center": [float(v) for v in center],
            "dims": [float(v) for v in box.dims],
            "yaw": float(box.yaw),
            "score": float(score),
            "class": "Vehicle",
        })
    return rows

from __future__ import annotations

import math

import numpy as np
import pytest

from gsedit.errors import MissingCamera, ObjectAbsent
from gsedit.layout import (
    Box3D,
    ClipParams,
    EDGES,
    FACES,
    ObjectClass,
    ObjectTrack,
    SceneLayout,
    box_corners,
    neighbors_within,
    render_depth_boxes,
    render_edge_mask,
    select_clips,
)
from gsedit.synthetic import driving_camera

from oracles import (
    box_corners_oracle,
    connected_components,
    enumerate_clip_windows,
    erode_mask,
    ray_box_depth,
    screen_linear_face_depth,
)


def simple_layout(boxes_by_id, num_frames=1, cam=None, camera_id="front"):
    cam = cam or driving_camera((0.0, 0.0, 1.6))
    cameras = {(f, camera_id): driving_camera(cam.cam_to_world.translation, f, camera_id,
                                              fx=cam.intrinsics.fx,
                                              width=cam.intrinsics.width,
                                              height=cam.intrinsics.height)
               for f in range(num_frames)}
    tracks = [ObjectTrack(oid, ObjectClass.VEHICLE,
                          {f: box for f in range(num_frames)})
              for oid, box in boxes_by_id.items()]
    return SceneLayout(num_frames=num_frames, cameras=cameras, tracks=tracks)


class TestBoxCorners:
    def test_unit_cube(self):
        corners = box_corners(Box3D(np.zeros(3), np.ones(3), 0.0))
        want = np.array([
            [+0.5, +0.5, -0.5], [-0.5, +0.5, -0.5], [-0.5, -0.5, -0.5], [+0.5, -0.5, -0.5],
            [+0.5, +0.5, +0.5], [-0.5, +0.5, +0.5], [-0.5, -0.5, +0.5], [+0.5, -0.5, +0.5],
        ])
        np.testing.assert_allclose(corners, want)

    def test_quarter_turn_rotates_xy(self):
        a = box_corners(Box3D(np.zeros(3), np.array([2.0, 1.0, 1.0]), 0.0))
        b = box_corners(Box3D(np.zeros(3), np.array([2.0, 1.0, 1.0]), math.pi / 2))
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        np.testing.assert_allclose(b[:, :2], a[:, :2] @ rot.T, atol=1e-12)
        np.testing.assert_allclose(b[:, 2], a[:, 2])

    def test_matches_scalar_oracle(self):
        box = Box3D(np.array([10.0, 5.0, 1.0]), np.array([4.0, 2.0, 1.5]), 0.3)
        np.testing.assert_allclose(box_corners(box),
                                   box_corners_oracle([10, 5, 1], [4, 2, 1.5], 0.3),
                                   atol=1e-9)

    def test_center_of_corners_is_box_center(self):
        box = Box3D(np.array([-3.0, 7.0, 2.0]), np.array([4.0, 2.0, 1.5]), -1.2)
        np.testing.assert_allclose(box_corners(box).mean(axis=0), box.center, atol=1e-9)

    def test_yaw_wraps(self):
        assert Box3D(np.zeros(3), np.ones(3), 3 * math.pi).yaw == pytest.approx(math.pi)


class TestDepthBoxes:
    def test_empty_layout_is_zero(self):
        layout = simple_layout({})
        assert not render_depth_boxes(layout, 0, "front").any()

    def test_missing_camera(self):
        layout = simple_layout({})
        with pytest.raises(MissingCamera):
            render_depth_boxes(layout, 0, "nope")

    def test_fronto_parallel_face_constant_depth(self):
        # Box ahead of a forward camera, yaw 0: the front face lies in the
        # plane x = 10, i.e. camera depth exactly 10 over its whole footprint.
        box = Box3D(np.array([14.0, 0.0, 1.0]), np.array([8.0, 3.0, 2.0]), 0.0)
        layout = simple_layout({"a": box})
        depth = render_depth_boxes(layout, 0, "front")
        # Front face projects to u in 480 +- 120, v in [288, 448]; stay 1 px inside.
        region = depth[290:446, 362:598]
        assert region.shape[0] > 0
        np.testing.assert_allclose(region, 10.0, atol=1e-4)

    def test_zbuffer_keeps_nearest(self):
        near_box = Box3D(np.array([6.6, 0.0, 1.6]), np.array([3.2, 2.0, 1.0]), 0.0)
        far_box = Box3D(np.array([11.6, 0.0, 1.6]), np.array([3.2, 4.0, 2.0]), 0.0)
        layout = simple_layout({"near": near_box, "far": far_box})
        depth = render_depth_boxes(layout, 0, "front")
        cy, cx = 320, 480
        assert depth[cy, cx] == pytest.approx(5.0, abs=1e-6)

    def test_behind_camera_empty(self):
        box = Box3D(np.array([-20.0, 0.0, 1.0]), np.array([4.0, 2.0, 1.5]), 0.4)
        layout = simple_layout({"a": box})
        assert not render_depth_boxes(layout, 0, "front").any()

    def test_matches_ray_oracle_far_boxes(self):
        # At 50-90 m the screen-linear interpolation is within 0.5% of the
        # true ray-cast depth away from coverage boundaries.
        rng = np.random.default_rng(21)
        for _ in range(6):
            center = np.array([rng.uniform(50.0, 90.0), rng.uniform(-6.0, 6.0),
                               rng.uniform(0.6, 1.2)])
            dims = np.array([rng.uniform(3.5, 5.0), rng.uniform(1.6, 2.2),
                             rng.uniform(1.3, 1.8)])
            yaw = rng.uniform(-math.pi, math.pi)
            layout = simple_layout({"a": Box3D(center, dims, yaw)})
            cam = layout.camera(0, "front")
            got = render_depth_boxes(layout, 0, "front")
            want = ray_box_depth(cam, center, dims, yaw)
            interior = erode_mask(got > 0, 1) & erode_mask(want > 0, 1)
            assert interior.sum() > 50
            rel = np.abs(got[interior] - want[interior]) / want[interior]
            assert rel.max() < 0.005

    def test_matches_independent_screen_linear_oracle(self):
        rng = np.random.default_rng(22)
        for _ in range(4):
            center = np.array([rng.uniform(8.0, 25.0), rng.uniform(-4.0, 4.0),
                               rng.uniform(0.5, 1.5)])
            dims = np.array([rng.uniform(3.5, 5.0), rng.uniform(1.6, 2.2),
                             rng.uniform(1.3, 1.8)])
            yaw = rng.uniform(-math.pi, math.pi)
            layout = simple_layout({"a": Box3D(center, dims, yaw)})
            cam = layout.camera(0, "front")
            got = render_depth_boxes(layout, 0, "front")
            want = screen_linear_face_depth(cam, box_corners(Box3D(center, dims, yaw)),
                                            FACES, 0.1)
            interior = erode_mask(got > 0, 1) & erode_mask(want > 0, 1)
            assert interior.sum() > 100
            np.testing.assert_allclose(got[interior], want[interior], rtol=1e-6)


class TestEdgeMask:
    def test_empty_layout(self):
        layout = simple_layout({})
        assert not render_edge_mask(layout, 0, "front").any()

    def test_single_box_wireframe(self):
        box = Box3D(np.array([15.0, 0.5, 1.0]), np.array([4.2, 1.9, 1.5]), 0.35)
        layout = simple_layout({"a": box})
        mask = render_edge_mask(layout, 0, "front")
        total = mask.sum()
        assert 0 < total < 0.05 * mask.size
        # The union of the 12 edges is one connected wireframe, and each edge
        # drawn alone is itself a single connected segment inside the union.
        assert connected_components(mask) == 1
        full = np.zeros_like(mask)
        for i, j in EDGES:
            single_track = layout.tracks[0]
            one = np.zeros_like(mask, dtype=bool)
            from gsedit.layout import _draw_segment, _pinhole
            from gsedit.geometry import world_to_camera
            cam = layout.camera(0, "front")
            pts = world_to_camera(box_corners(box), cam)
            uv = _pinhole(pts[[i, j]], cam)
            _draw_segment(one, uv[0], uv[1], 2.0)
            assert one.any()
            assert connected_components(one) == 1
            assert (mask[one] == 1).all()
            full |= one
        assert np.array_equal(full.astype(np.uint8), mask)

    def test_behind_camera_empty(self):
        box = Box3D(np.array([-15.0, 0.0, 1.0]), np.array([4.0, 2.0, 1.5]), 0.0)
        layout = simple_layout({"a": box})
        assert not render_edge_mask(layout, 0, "front").any()

    def test_edges_lie_on_faces(self):
        # Every edge pixel sits within a 2 px dilation of the covered depth
        # image of the same scene.
        box = Box3D(np.array([18.0, -1.0, 1.0]), np.array([4.5, 2.0, 1.6]), -0.5)
        layout = simple_layout({"a": box})
        edge = render_edge_mask(layout, 0, "front").astype(bool)
        covered = render_depth_boxes(layout, 0, "front") > 0
        grown = ~erode_mask(~covered, 2)  # dilation by 2 = complement-erosion
        assert (grown[edge]).all()


class TestNeighbors:
    def _two_object_layout(self, dist):
        a = Box3D(np.array([20.0, 0.0, 0.75]), np.array([4.0, 2.0, 1.5]), 0.0)
        b = Box3D(np.array([20.0 + dist, 0.0, 0.75]), np.array([4.0, 2.0, 1.5]), 0.0)
        return simple_layout({"a": a, "b": b})

    def test_sole_object(self):
        layout = simple_layout({"a": Box3D(np.array([20.0, 0.0, 0.75]),
                                           np.array([4.0, 2.0, 1.5]), 0.0)})
        assert neighbors_within(layout, 0, "a", 3.0) == 0

    def test_inside_radius(self):
        assert neighbors_within(self._two_object_layout(2.9), 0, "a", 3.0) == 1

    def test_outside_radius(self):
        assert neighbors_within(self._two_object_layout(3.1), 0, "a", 3.0) == 0

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            d = rng.uniform(1.0, 5.0)
            layout = self._two_object_layout(d)
            assert (neighbors_within(layout, 0, "a", 3.0)
                    == neighbors_within(layout, 0, "b", 3.0))

    def test_absent_object(self):
        layout = self._two_object_layout(2.0)
        with pytest.raises(ObjectAbsent):
            neighbors_within(layout, 0, "missing", 3.0)


def twelve_frame_layout(with_intruder=False):
    """12-frame scene: one always-eligible object, optionally a second object
    that comes within 3 m during frames 4-6."""
    cameras = {(f, "front"): driving_camera((0.0, 0.0, 1.6), f) for f in range(12)}
    car_boxes = {f: Box3D(np.array([20.0, -1.0, 0.75]), np.array([4.2, 1.9, 1.5]), 0.0)
                 for f in range(12)}
    tracks = [ObjectTrack("car", ObjectClass.VEHICLE, car_boxes)]
    if with_intruder:
        other = {}
        for f in range(12):
            y = 1.0 if 4 <= f <= 6 else 9.0
            other[f] = Box3D(np.array([20.0, y, 0.75]), np.array([4.0, 1.8, 1.5]), 0.0)
        tracks.append(ObjectTrack("other", ObjectClass.VEHICLE, other))
    return SceneLayout(num_frames=12, cameras=cameras, tracks=tracks)


class TestSelectClips:
    def test_empty_layout(self):
        layout = SceneLayout(num_frames=12,
                             cameras={(f, "front"): driving_camera((0, 0, 1.6), f)
                                      for f in range(12)},
                             tracks=[])
        assert select_clips(layout, "front") == []

    def test_isolated_object_all_windows(self):
        layout = twelve_frame_layout()
        got = select_clips(layout, "front", ClipParams(n_frames=10))
        assert got == [("car", 0), ("car", 1), ("car", 2)]
        want = enumerate_clip_windows(layout, "front", 10, 40.0, 2, 3.0)
        assert got == want

    def test_intruder_with_strict_neighbor_rule(self):
        layout = twelve_frame_layout(with_intruder=True)
        params = ClipParams(n_frames=4, max_neighbors=1)
        got = [w for w in select_clips(layout, "front", params) if w[0] == "car"]
        want = [w for w in enumerate_clip_windows(layout, "front", 4, 40.0, 1, 3.0)
                if w[0] == "car"]
        assert got == want
        # Frames 4-6 are contaminated, so the only clean 4-frame runs are
        # 0-3, 7-10 and 8-11.
        assert got == [("car", 0), ("car", 7), ("car", 8)]

    def test_track_permutation_invariance(self):
        layout = twelve_frame_layout(with_intruder=True)
        flipped = SceneLayout(num_frames=layout.num_frames, cameras=layout.cameras,
                              tracks=list(reversed(layout.tracks)))
        params = ClipParams(n_frames=4, max_neighbors=1)
        assert select_clips(layout, "front", params) == select_clips(flipped, "front", params)

    def test_min_height_filter(self):
        layout = twelve_frame_layout()
        # Height at 20 m with fx=800 and h=1.5 is about 60 px.
        assert select_clips(layout, "front", ClipParams(n_frames=10, min_height_px=100.0)) == []

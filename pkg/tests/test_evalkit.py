from __future__ import annotations

import math

import numpy as np
import pytest

from gsedit.errors import DegenerateRange, NoGroundTruth, NotVisible
from gsedit.evalkit import (
    Detection,
    EvalConfig,
    Match,
    MatchSet,
    compute_metrics,
    crop_eval_region,
    iou3d,
    let_align,
    match_frame,
    resize_bilinear,
)
from gsedit.layout import Box3D
from gsedit.synthetic import driving_camera

from oracles import monte_carlo_iou3d


def vbox(center, dims=(4.0, 2.0, 1.5), yaw=0.0):
    return Box3D(np.asarray(center, dtype=np.float64), np.asarray(dims, dtype=np.float64), yaw)


CAM = driving_camera((0.0, 0.0, 1.6))
ORIGIN = CAM.optical_center


class TestLetAlign:
    def test_exact_detection(self):
        gt = vbox([20.0, 0.0, 1.6])
        aligned, lon, rng = let_align(gt, gt, ORIGIN)
        assert lon == 0.0
        assert rng == pytest.approx(20.0)
        np.testing.assert_array_equal(aligned.center, gt.center)

    def test_longitudinal_shift_recovered(self):
        gt = vbox([20.0, 0.0, 1.6])
        det = vbox([22.0, 0.0, 1.6])  # +2 m along the ray (ray is +x here)
        aligned, lon, rng = let_align(det, gt, ORIGIN)
        assert lon == pytest.approx(2.0)
        np.testing.assert_allclose(aligned.center, gt.center, atol=1e-12)

    def test_perpendicular_shift_untouched(self):
        gt = vbox([20.0, 0.0, 1.6])
        det = vbox([20.0, 1.0, 1.6])
        aligned, lon, _ = let_align(det, gt, ORIGIN)
        assert lon == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(aligned.center, det.center)

    def test_realignment_is_idempotent(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            gt = vbox(rng.uniform([5, -10, 0], [60, 10, 3]))
            det = vbox(gt.center + rng.normal(scale=1.0, size=3))
            aligned, _, _ = let_align(det, gt, ORIGIN)
            _, lon2, _ = let_align(aligned, gt, ORIGIN)
            assert abs(lon2) < 1e-9

    def test_degenerate_range(self):
        with pytest.raises(DegenerateRange):
            let_align(vbox([0.1, 0.0, 1.6]), vbox([0.1, 0.0, 1.6]), ORIGIN)


class TestIou3d:
    def test_identical(self):
        b = vbox([3.0, 2.0, 1.0], yaw=0.7)
        assert iou3d(b, b) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint(self):
        assert iou3d(vbox([0, 0, 0]), vbox([100, 0, 0])) == 0.0

    def test_unit_cubes_offset_one_third(self):
        a = Box3D(np.zeros(3), np.ones(3), 0.0)
        b = Box3D(np.array([0.5, 0.0, 0.0]), np.ones(3), 0.0)
        assert iou3d(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = vbox(rng.uniform(-2, 2, 3), rng.uniform(0.5, 4, 3), rng.uniform(-math.pi, math.pi))
            b = vbox(a.center + rng.normal(scale=1.0, size=3),
                     rng.uniform(0.5, 4, 3), rng.uniform(-math.pi, math.pi))
            assert abs(iou3d(a, b) - iou3d(b, a)) < 1e-12

    def test_yaw_plus_pi_invariant(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = vbox(rng.uniform(-2, 2, 3), rng.uniform(0.5, 4, 3), rng.uniform(-1, 1))
            b = vbox(a.center + rng.normal(scale=0.5, size=3),
                     rng.uniform(0.5, 4, 3), rng.uniform(-1, 1))
            flipped = iou3d(vbox(a.center, a.dims, a.yaw + math.pi),
                            vbox(b.center, b.dims, b.yaw + math.pi))
            assert abs(iou3d(a, b) - flipped) < 1e-9

    def test_against_monte_carlo(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            a = vbox(rng.uniform(-1, 1, 3), rng.uniform(1.0, 4.0, 3),
                     rng.uniform(-math.pi, math.pi))
            b = vbox(a.center + rng.normal(scale=1.0, size=3),
                     rng.uniform(1.0, 4.0, 3), rng.uniform(-math.pi, math.pi))
            got = iou3d(a, b)
            want = monte_carlo_iou3d(a.center, a.dims, a.yaw, b.center, b.dims, b.yaw,
                                     samples=400_000, seed=9)
            assert abs(got - want) < 0.01


class TestMatchFrame:
    def test_perfect_detections_all_matched(self):
        gts = [vbox([20.0, -1.5, 0.75]), vbox([26.0, 3.2, 0.75])]
        dets = [Detection(g, 1.0) for g in gts]
        ms = match_frame(dets, gts, EvalConfig(), CAM)
        assert len(ms.matches) == 2 and not ms.fp_scores
        assert all(m.lon_error == 0.0 and m.heading_error == 0.0 for m in ms.matches)

    def _shifted(self, frac):
        gt = vbox([20.0, 0.0, 1.6])
        ray = (gt.center - ORIGIN) / np.linalg.norm(gt.center - ORIGIN)
        det = vbox(gt.center + frac * 20.0 * ray)
        return gt, Detection(det, 0.9)

    def test_four_percent_shift_is_tp(self):
        gt, det = self._shifted(0.04)
        ms = match_frame([det], [gt], EvalConfig(), CAM)
        assert len(ms.matches) == 1
        assert ms.matches[0].lon_error == pytest.approx(0.8, abs=1e-9)

    def test_six_percent_shift_is_fn(self):
        gt, det = self._shifted(0.06)
        ms = match_frame([det], [gt], EvalConfig(), CAM)
        assert not ms.matches
        assert ms.fp_scores == [0.9]

    def test_six_percent_admitted_at_ten_percent_tolerance(self):
        gt, det = self._shifted(0.06)
        ms = match_frame([det], [gt], EvalConfig(lon_tolerance_frac=0.10), CAM)
        assert len(ms.matches) == 1

    def test_greedy_prefers_higher_score(self):
        gt = vbox([20.0, 0.0, 1.6])
        good = Detection(gt, 0.9)
        also = Detection(vbox([20.2, 0.0, 1.6]), 0.5)
        ms = match_frame([also, good], [gt], EvalConfig(), CAM)
        assert len(ms.matches) == 1
        assert ms.matches[0].score == 0.9
        assert ms.fp_scores == [0.5]

    def test_heading_error_wraps(self):
        gt = vbox([20.0, 0.0, 1.6], dims=(2.0, 2.0, 1.5))
        det = Detection(vbox([20.0, 0.0, 1.6], dims=(2.0, 2.0, 1.5),
                             yaw=math.pi - 0.1), 1.0)
        ms = match_frame([det], [gt], EvalConfig(), CAM)
        assert ms.matches[0].heading_error == pytest.approx(math.pi - 0.1)


class TestComputeMetrics:
    def test_perfect_scores_one(self):
        gt = vbox([20.0, 0.0, 1.6])
        ms = match_frame([Detection(gt, 1.0)], [gt], EvalConfig(), CAM)
        report = compute_metrics(ms)
        assert report.let_map == 1.0
        assert report.let_maph == 1.0
        assert report.let_mapl == 1.0
        assert (report.tp, report.fp, report.fn) == (1, 0, 0)

    def test_heading_half_weight(self):
        # Square-footprint box rotated 90 degrees: IoU still 1, heading error
        # pi/2 -> heading weight 0.5 -> mAPH = 0.5 * mAP.
        gt = vbox([20.0, 0.0, 1.6], dims=(2.0, 2.0, 1.5))
        det = Detection(vbox([20.0, 0.0, 1.6], dims=(2.0, 2.0, 1.5), yaw=math.pi / 2), 1.0)
        report = compute_metrics(match_frame([det], [gt], EvalConfig(), CAM))
        assert report.let_map == 1.0
        assert report.let_maph == pytest.approx(0.5)
        assert report.let_mapl == pytest.approx(0.5)  # affinity 1, stacked on heading

    def test_affinity_zero_at_tolerance_boundary(self):
        # GT dead ahead at range exactly 20: tolerance = 1.0 m; shift the
        # detection exactly 1 m along the ray -> gate passes at equality,
        # affinity is exactly 0 -> mAPL 0 while mAP 1.
        gt = vbox([20.0, 0.0, 1.6], dims=(4.0, 2.0, 1.5))
        det = Detection(vbox([21.0, 0.0, 1.6], dims=(4.0, 2.0, 1.5)), 1.0)
        report = compute_metrics(match_frame([det], [gt], EvalConfig(), CAM))
        assert report.let_map == 1.0
        assert report.let_maph == 1.0
        assert report.let_mapl == 0.0

    def test_ordering_on_randomized_sets(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(1, 30))
            matches = [Match(score=float(rng.random()),
                             lon_error=float(rng.uniform(-1, 1)),
                             range_m=20.0,
                             heading_error=float(rng.uniform(0, math.pi)),
                             tolerance=1.0,
                             iou=float(rng.uniform(0.5, 1.0)))
                       for _ in range(int(rng.integers(0, n + 1)))]
            ms = MatchSet(matches=matches,
                          fp_scores=list(rng.random(int(rng.integers(0, 10)))),
                          num_gt=n)
            report = compute_metrics(ms)
            assert report.let_mapl <= report.let_maph + 1e-12
            assert report.let_maph <= report.let_map + 1e-12
            assert 0.0 <= report.let_mapl and report.let_map <= 1.0

    def test_detection_order_invariance(self):
        rng = np.random.default_rng(5)
        gts = [vbox([20.0 + 6 * i, (-1) ** i * 2.0, 1.0]) for i in range(4)]
        dets = [Detection(vbox(g.center + rng.normal(scale=0.2, size=3)),
                          float(rng.uniform(0.3, 1.0))) for g in gts]
        dets += [Detection(vbox([50.0, 8.0, 1.0]), 0.4)]
        a = compute_metrics(match_frame(dets, gts, EvalConfig(), CAM))
        b = compute_metrics(match_frame(dets[::-1], gts, EvalConfig(), CAM))
        assert a.let_map == b.let_map
        assert a.let_maph == b.let_maph
        assert a.let_mapl == b.let_mapl

    def test_score_monotone_map_invariance(self):
        rng = np.random.default_rng(6)
        matches = [Match(float(s), 0.1, 20.0, 0.2, 1.0, 0.8)
                   for s in rng.uniform(0.1, 0.9, 8)]
        fp = list(rng.uniform(0.1, 0.9, 5))
        base = compute_metrics(MatchSet(matches, fp, 10))
        squashed = compute_metrics(MatchSet(
            [Match(m.score / 2 + 0.25, m.lon_error, m.range_m, m.heading_error,
                   m.tolerance, m.iou) for m in matches],
            [s / 2 + 0.25 for s in fp], 10))
        assert base.let_map == pytest.approx(squashed.let_map, abs=1e-12)
        assert base.let_maph == pytest.approx(squashed.let_maph, abs=1e-12)
        assert base.let_mapl == pytest.approx(squashed.let_mapl, abs=1e-12)

    def test_no_ground_truth(self):
        with pytest.raises(NoGroundTruth):
            compute_metrics(MatchSet([], [0.5], 0))

    def test_per_clip_breakdown(self):
        gt = vbox([20.0, 0.0, 1.6])
        ms = match_frame([Detection(gt, 1.0)], [gt], EvalConfig(), CAM)
        report = compute_metrics({"clip_a": ms, "clip_b": MatchSet([], [0.3], 1)})
        assert report.per_clip["clip_a"]["tp"] == 1
        assert report.per_clip["clip_b"]["fn"] == 1
        assert report.fn == 1 and report.tp == 1 and report.fp == 1


class TestCropEvalRegion:
    def test_same_size_resize_is_identity(self):
        rng = np.random.default_rng(7)
        img = rng.random((512, 512, 3))
        out = resize_bilinear(img, 512, 512)
        assert np.abs(out - img).max() < 1e-12

    def test_upsample_preserves_corners(self):
        rng = np.random.default_rng(8)
        img = rng.random((256, 256, 3))
        out = resize_bilinear(img, 512, 512)
        np.testing.assert_allclose(out[0, 0], img[0, 0], atol=1e-12)
        np.testing.assert_allclose(out[-1, -1], img[-1, -1], atol=1e-12)
        np.testing.assert_allclose(out[0, -1], img[0, -1], atol=1e-12)

    def test_crop_shape(self):
        img = np.random.default_rng(9).random((640, 960, 3))
        out = crop_eval_region(img, vbox([20.0, -1.5, 0.75]), CAM)
        assert out.shape == (512, 512, 3)

    def test_partially_visible_ok(self):
        img = np.random.default_rng(10).random((640, 960, 3))
        out = crop_eval_region(img, vbox([12.0, -7.5, 0.75]), CAM)
        assert out.shape == (512, 512, 3)

    def test_behind_camera_not_visible(self):
        img = np.zeros((640, 960, 3))
        with pytest.raises(NotVisible):
            crop_eval_region(img, vbox([-20.0, 0.0, 0.75]), CAM)

    def test_off_image_not_visible(self):
        img = np.zeros((640, 960, 3))
        with pytest.raises(NotVisible):
            crop_eval_region(img, vbox([5.0, 100.0, 0.75]), CAM)

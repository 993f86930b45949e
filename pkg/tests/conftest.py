from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gsedit.geometry import CameraFrame, CameraIntrinsics, Pose
from gsedit.synthetic import demo_scene, driving_camera, procedural_car


@pytest.fixture(scope="session")
def scene():
    return demo_scene()


@pytest.fixture(scope="session")
def car_small():
    return procedural_car(200, seed=11)


@pytest.fixture
def small_cam():
    """Forward-facing driving camera with a small image for fast renders."""
    return driving_camera((0.0, 0.0, 1.6), fx=120.0, width=128, height=96)


@pytest.fixture
def axis_cam():
    """Identity-pose camera: optical axis along world +z, used where boxes
    are laid out directly in camera coordinates."""
    intr = CameraIntrinsics(fx=100.0, fy=100.0, cx=150.0, cy=330.0, width=400, height=700)
    return CameraFrame(intr, Pose.identity(), 0, "axis")


def random_pose(rng) -> Pose:
    """Random proper rotation (QR-based) plus a random translation."""
    m = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return Pose(q, rng.normal(scale=3.0, size=3))

"""Gaussian-guided object editing for driving scenes.

Core surfaces: gaussian asset rendering (gaussians), box-track layouts and
rasterizers (layout), edit application and conditioning bundles (editing),
clip preparation (dataprep), longitudinal-error-tolerant metrics (evalkit),
and the file formats plus CLI (scene_io, tensorfile, bundle_io, cli).
"""

__version__ = "0.1.0"

from .geometry import CameraFrame, CameraIntrinsics, Pose  # noqa: F401
from .gaussians import Gaussian3D, GaussianCloud, RenderedFrame, render, render_naive  # noqa: F401
from .layout import Box3D, ObjectTrack, SceneLayout, select_clips  # noqa: F401
from .editing import ConditioningBundle, Delete, Insert, Reposition, apply_edit, build_bundle  # noqa: F401
from .evalkit import Detection, EvalConfig, MetricsReport, compute_metrics, iou3d  # noqa: F401

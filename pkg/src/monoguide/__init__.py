"""Monocular 3D detection toolkit: guidance cuboids from 2D boxes, face warping,
interval-classification refinement and KITTI-style 3D evaluation."""

from .geometry import (
    Box2D,
    Box3D,
    CameraModel,
    Surface,
    SurfaceSet,
    alpha_to_theta,
    corners3d,
    project,
    project_box,
    theta_to_alpha,
    visible_surfaces,
)
from .guidance import Detection2D, Guidance, GuidanceGenerator, SizePrior, generate_guidance
from .metrics import DetectionResult, Difficulty, GroundTruth, iou3d
from .refine import IntervalEncoder, IntervalRefiner, IntervalSpec, decode_prediction
from .warp import FeatureMap, solve_homography, warp_region

__version__ = "0.1.0"

__all__ = [
    "Box2D", "Box3D", "CameraModel", "Surface", "SurfaceSet", "alpha_to_theta", "corners3d",
    "project", "project_box", "theta_to_alpha", "visible_surfaces",
    "Detection2D", "Guidance", "GuidanceGenerator", "SizePrior", "generate_guidance",
    "DetectionResult", "Difficulty", "GroundTruth", "iou3d",
    "IntervalEncoder", "IntervalRefiner", "IntervalSpec", "decode_prediction",
    "FeatureMap", "solve_homography", "warp_region",
]

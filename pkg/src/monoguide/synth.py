"""Synthetic ground-truth scenes and idealized detector outputs.

Random numbers come from numpy's PCG64 bit generator. Frame ``k`` of a
scene with seed ``s`` is drawn from ``PCG64(SeedSequence([s, k]))``; each
placement attempt draws, in order, depth ``z``, lateral offset ``x`` and
yaw (uniform), then ``w, h, l`` (normal) when sizes are not fixed.
Attempts that overlap an earlier object in bird's-eye view, or that leave
the declared image when ``within_image`` is set, are redrawn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Box2D, Box3D, CameraModel, corners3d, project, project_box, project_points, theta_to_alpha
from .guidance import DEFAULT_PRIORS, Detection2D, Guidance, SizePrior
from .metrics import GroundTruth, bev_intersection_area, bev_rectangle
from .refine import DIMS, IntervalScores, IntervalSpec, classify_delta, raw_deltas

# KITTI object-benchmark P2 (training frame 000000)
KITTI_P2 = np.array([
    [7.215377e02, 0.0, 6.095593e02, 4.485728e01],
    [0.0, 7.215377e02, 1.728540e02, 2.163791e-01],
    [0.0, 0.0, 1.0, 2.745884e-03],
])
KITTI_IMAGE_SIZE = (1242, 375)
CAMERA_HEIGHT = 1.65

MODES = ("exact_lambda", "tight_bbox")


def default_camera() -> CameraModel:
    return CameraModel(KITTI_P2)


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    count: int = 10
    depth_range: tuple = (5.0, 60.0)
    lateral_range: tuple = (-15.0, 15.0)
    yaw_range: tuple = (-math.pi, math.pi)
    size_mode: str = "prior"
    size_std: tuple = (0.0, 0.0, 0.0)
    camera: CameraModel = field(default_factory=default_camera)
    camera_height: float = CAMERA_HEIGHT
    prior: SizePrior = DEFAULT_PRIORS["Car"]
    image_size: tuple = KITTI_IMAGE_SIZE
    within_image: bool = False
    min_gap: float = 0.2
    max_attempts: int = 10_000

    def __post_init__(self):
        lo, hi = self.depth_range
        if not 0 < lo <= hi:
            raise ValueError(f"depth range must be positive and ordered, got {self.depth_range}")
        if self.lateral_range[0] > self.lateral_range[1]:
            raise ValueError(f"lateral range is empty: {self.lateral_range}")
        if self.yaw_range[0] > self.yaw_range[1]:
            raise ValueError(f"yaw range is empty: {self.yaw_range}")
        if self.size_mode not in ("prior", "gaussian"):
            raise ValueError(f"size_mode must be 'prior' or 'gaussian', got {self.size_mode!r}")
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if not isinstance(self.camera, CameraModel):
            object.__setattr__(self, "camera", CameraModel(self.camera))


def frame_rng(seed: int, frame: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(frame)])))


def _draw_box(spec: SceneSpec, rng: np.random.Generator) -> Box3D:
    z = rng.uniform(*spec.depth_range)
    x = rng.uniform(*spec.lateral_range)
    theta = rng.uniform(*spec.yaw_range)
    w, h, l = spec.prior.w_bar, spec.prior.h_bar, spec.prior.l_bar
    if spec.size_mode == "gaussian":
        sw, sh, sl = spec.size_std
        w = max(w + rng.normal(0.0, sw), 0.2 * w)
        h = max(h + rng.normal(0.0, sh), 0.2 * h)
        l = max(l + rng.normal(0.0, sl), 0.2 * l)
    return Box3D(w, h, l, x, spec.camera_height, z, theta)


def _acceptable(box: Box3D, placed: Sequence[Box3D], spec: SceneSpec) -> bool:
    pts = corners3d(box)
    depth = pts @ spec.camera.P[2, :3] + spec.camera.P[2, 3]
    if np.any(depth <= 0.1):
        return False
    if spec.within_image:
        uv = project_points(spec.camera, pts)
        W, H = spec.image_size
        if uv[:, 0].min() < 0 or uv[:, 1].min() < 0 or uv[:, 0].max() > W or uv[:, 1].max() > H:
            return False
    grown = box.replace(w=box.w + spec.min_gap, l=box.l + spec.min_gap)
    rect = bev_rectangle(grown)
    for other in placed:
        if math.hypot(other.x - box.x, other.z - box.z) > 0.5 * (math.hypot(grown.w, grown.l)
                                                                 + math.hypot(other.w, other.l)):
            continue
        if bev_intersection_area(rect, bev_rectangle(other)) > 0:
            return False
    return True


def generate_scene(spec: SceneSpec, frame: int = 0) -> list:
    """``spec.count`` non-overlapping ground truths for one frame."""
    rng = frame_rng(spec.seed, frame)
    placed = []
    attempts = 0
    while len(placed) < spec.count:
        attempts += 1
        if attempts > spec.max_attempts:
            raise RuntimeError(f"could not place {spec.count} objects in {spec.max_attempts} attempts")
        box = _draw_box(spec, rng)
        if _acceptable(box, placed, spec):
            placed.append(box)
    return [
        GroundTruth(box, project_box(spec.camera, box), theta_to_alpha(box.theta, box.x, box.z),
                    spec.prior.class_name, 0.0, 0)
        for box in placed
    ]


def generate_scenes(spec: SceneSpec, n_frames: int) -> list:
    return [generate_scene(spec, k) for k in range(n_frames)]


def exact_lambda_box(camera: CameraModel, box: Box3D, lam: float) -> Box2D:
    """2D box whose top midpoint is the projected top center and whose lambda-lifted
    bottom midpoint is the projected bottom center."""
    u_b, v_b = project(camera, box.bottom_center)
    _, v_t = project(camera, box.bottom_center - np.array([0.0, box.h, 0.0]))
    h2d = (v_b - v_t) / (1.0 - lam)
    width = project_box(camera, box).w2d
    return Box2D(float(u_b), float(v_t + 0.5 * h2d), float(width), float(h2d))


def perfect_detections(scene: Sequence[GroundTruth], camera: CameraModel, mode: str = "tight_bbox",
                       lam: Optional[float] = None, score: float = 1.0) -> list:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    out = []
    for gt in scene:
        b = gt.box3d
        if mode == "exact_lambda":
            if lam is None:
                lam = DEFAULT_PRIORS["Car"].lam
            box2d = exact_lambda_box(camera, b, lam)
        else:
            box2d = project_box(camera, b)
        out.append(Detection2D(box2d, theta_to_alpha(b.theta, b.x, b.z), gt.class_name, score))
    return out


def oracle_scores(guidance, gt: Box3D, spec: IntervalSpec) -> IntervalScores:
    """One-hot confidences at the interval containing the true raw delta."""
    if isinstance(guidance, Guidance):
        guidance = guidance.box
    deltas = raw_deltas(guidance, gt)
    values = {}
    for j, d in enumerate(DIMS):
        v = np.zeros(spec.n_classes(d))
        v[classify_delta(spec, deltas[j], d)] = 1.0
        values[d] = v
    return IntervalScores(values)

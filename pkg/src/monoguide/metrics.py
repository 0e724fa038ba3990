"""3D detection metrics: rotated IoU, AP_3D, ALP, AOS and guidance recalls.

All frame-level functions take *sequences of frames*, each frame being a
sequence of boxes or records; a single frame ``f`` is passed as ``[f]``.

Matching is greedy: within a frame, detections are visited in descending
score order (ties by input order) and each takes the best still-unmatched
valid ground truth that passes the criterion. A detection that only passes
against ignored ground truths (harder than the evaluated difficulty) is
dropped instead of counted as a false positive, so ignored objects neither
count as misses nor penalize the detector.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .geometry import Box2D, Box3D, corners3d, iou2d

CLIP_TOL = 1e-9


# ---------------------------------------------------------------------------
# rotated IoU


def bev_rectangle(box: Box3D) -> np.ndarray:
    """Bottom-face corners in the (x, z) plane, counter-clockwise in that plane."""
    pts = corners3d(box)[:4][:, [0, 2]]
    if _signed_area(pts) < 0:
        pts = pts[::-1]
    return pts


def _signed_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_area(poly) -> float:
    return abs(_signed_area(poly))


def clip_convex(subject, clipper, tol: float = CLIP_TOL) -> list:
    """Sutherland-Hodgman clip of ``subject`` by the convex CCW polygon ``clipper``.

    Points within ``tol`` of a clip edge count as inside, so collinear
    vertices are kept.
    """
    output = [tuple(p) for p in subject]
    n = len(clipper)
    for k in range(n):
        if not output:
            break
        ax, ay = clipper[k]
        bx, by = clipper[(k + 1) % n]
        ex, ey = bx - ax, by - ay
        norm = math.hypot(ex, ey)
        if norm == 0.0:
            continue

        def dist(p):
            return (ex * (p[1] - ay) - ey * (p[0] - ax)) / norm

        inputs = output
        output = []
        prev = inputs[-1]
        d_prev = dist(prev)
        for cur in inputs:
            d_cur = dist(cur)
            if d_cur >= -tol:
                if d_prev < -tol:
                    output.append(_cut(prev, cur, d_prev, d_cur))
                output.append(cur)
            elif d_prev >= -tol:
                output.append(_cut(prev, cur, d_prev, d_cur))
            prev, d_prev = cur, d_cur
    return output


def _cut(p, q, dp, dq):
    t = dp / (dp - dq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def bev_intersection_area(rect_a, rect_b) -> float:
    a = np.asarray(rect_a, dtype=float)
    b = np.asarray(rect_b, dtype=float)
    if _signed_area(a) < 0:
        a = a[::-1]
    if _signed_area(b) < 0:
        b = b[::-1]
    poly = clip_convex(a.tolist(), b.tolist())
    if len(poly) < 3:
        return 0.0
    return polygon_area(poly)


def iou3d(a: Box3D, b: Box3D) -> float:
    reach = 0.5 * (math.hypot(a.w, a.l) + math.hypot(b.w, b.l))
    if math.hypot(a.x - b.x, a.z - b.z) >= reach:
        return 0.0
    y_overlap = min(a.y, b.y) - max(a.y - a.h, b.y - b.h)
    if y_overlap <= 0:
        return 0.0
    area = bev_intersection_area(bev_rectangle(a), bev_rectangle(b))
    inter = area * y_overlap
    if inter <= 0:
        return 0.0
    union = a.volume + b.volume - inter
    return float(min(1.0, max(0.0, inter / union)))


def center_distance(a: Box3D, b: Box3D) -> float:
    return math.dist((a.x, a.y, a.z), (b.x, b.y, b.z))


# ---------------------------------------------------------------------------
# records and difficulty


class Difficulty(enum.IntEnum):
    EASY = 0
    MODERATE = 1
    HARD = 2
    IGNORED = 3

    @classmethod
    def parse(cls, name) -> "Difficulty":
        if isinstance(name, Difficulty):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown difficulty {name!r}") from None


@dataclass(frozen=True)
class DifficultyLevel:
    min_height: float
    max_occlusion: int
    max_truncation: float


# KITTI devkit constants
DEFAULT_DIFFICULTY = {
    Difficulty.EASY: DifficultyLevel(40.0, 0, 0.15),
    Difficulty.MODERATE: DifficultyLevel(25.0, 1, 0.30),
    Difficulty.HARD: DifficultyLevel(25.0, 2, 0.50),
}


@dataclass(frozen=True)
class GroundTruth:
    box3d: Box3D
    box2d: Box2D
    alpha: float
    class_name: str = "Car"
    truncation: float = 0.0
    occlusion: int = 0

    def __post_init__(self):
        if not 0.0 <= self.truncation <= 1.0:
            raise ValueError(f"truncation must be in [0, 1], got {self.truncation}")
        if self.occlusion not in (0, 1, 2, 3):
            raise ValueError(f"occlusion must be one of 0..3, got {self.occlusion}")

    @property
    def difficulty(self) -> Difficulty:
        return difficulty_of(self)


@dataclass(frozen=True)
class DetectionResult:
    box3d: Box3D
    box2d: Box2D
    alpha: float
    class_name: str = "Car"
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


def difficulty_of(gt: GroundTruth, table: Mapping = DEFAULT_DIFFICULTY) -> Difficulty:
    for level in (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD):
        t = table[level]
        if (gt.box2d.h2d >= t.min_height and gt.occlusion <= t.max_occlusion
                and gt.truncation <= t.max_truncation):
            return level
    return Difficulty.IGNORED


# ---------------------------------------------------------------------------
# PR curves and AP


@dataclass
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray
    interpolation: str = "11-point"
    n_gt: int = 0
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ap(self) -> float:
        return interpolated_ap(self.recall, self.precision, _n_points(self.interpolation))


def _n_points(interpolation) -> int:
    if interpolation in (11, "11", "11-point"):
        return 11
    if interpolation in (40, "40", "40-point"):
        return 40
    raise ValueError(f"unknown interpolation {interpolation!r}")


def recall_points(n_points: int = 11) -> np.ndarray:
    if n_points == 11:
        return np.arange(11) / 10.0
    if n_points == 40:
        return np.arange(1, 41) / 40.0
    raise ValueError("n_points must be 11 or 40")


def interpolated_ap(recall, precision, n_points: int = 11) -> float:
    """Mean over sampled recalls of the max precision at recall >= r."""
    recall = np.asarray(recall, dtype=float)
    precision = np.asarray(precision, dtype=float)
    total = 0.0
    for r in recall_points(n_points):
        mask = recall >= r - 1e-12
        total += float(precision[mask].max()) if mask.any() else 0.0
    return total / n_points


def pr_curve_from_matches(scores, is_tp, n_gt: int, n_points: int = 11, weights=None) -> PRCurve:
    """Build a PR curve from per-detection scores and TP flags.

    ``weights`` replaces the 1 each true positive adds to the precision
    numerator (AOS passes the orientation similarity); recall still counts
    every true positive as one recovered object.
    """
    scores = np.asarray(scores, dtype=float)
    is_tp = np.asarray(is_tp, dtype=bool)
    weights = is_tp.astype(float) if weights is None else np.where(is_tp, np.asarray(weights, dtype=float), 0.0)
    order = np.argsort(-scores, kind="stable")
    rank = np.arange(1, len(scores) + 1)
    hits = np.cumsum(is_tp[order])
    recall = hits / n_gt if n_gt > 0 else np.zeros(len(scores))
    precision = np.cumsum(weights[order]) / rank
    return PRCurve(recall, precision, f"{n_points}-point", n_gt, scores[order])


def average_precision(scores, is_tp, n_gt: int, n_points: int = 11, weights=None) -> float:
    """Interpolated AP of a scored list of matched detections."""
    if n_gt <= 0 or len(scores) == 0:
        return 0.0
    return pr_curve_from_matches(scores, is_tp, n_gt, n_points, weights).ap


# ---------------------------------------------------------------------------
# matching


def _box3d_of(obj) -> Box3D:
    if isinstance(obj, Box3D):
        return obj
    for attr in ("box3d", "box"):
        b = getattr(obj, attr, None)
        if isinstance(b, Box3D):
            return b
    raise TypeError(f"cannot get a 3D box from {type(obj).__name__}")


def _class_of(obj):
    name = getattr(obj, "class_name", None)
    if name is None:
        name = getattr(getattr(obj, "source", None), "class_name", None)
    return name


@dataclass(frozen=True)
class Criterion:
    """Pairwise similarity where larger is better and ``sim >= threshold`` passes."""

    name: str
    similarity: Callable
    threshold: float


def _sim_iou3d(d, g) -> float:
    return iou3d(d.box3d, g.box3d)


def _sim_iou2d(d, g) -> float:
    return iou2d(d.box2d, g.box2d)


def _sim_neg_distance(d, g) -> float:
    return -center_distance(d.box3d, g.box3d)


def iou3d_criterion(threshold: float) -> Criterion:
    return Criterion("iou3d", _sim_iou3d, threshold)


def iou2d_criterion(threshold: float = 0.5) -> Criterion:
    return Criterion("iou2d", _sim_iou2d, threshold)


def distance_criterion(threshold_m: float) -> Criterion:
    return Criterion("distance", _sim_neg_distance, -threshold_m)


def _valid_mask(gts, difficulty, class_name, table):
    mask = []
    for g in gts:
        ok = class_name is None or _class_of(g) == class_name
        if ok and difficulty is not None:
            ok = difficulty_of(g, table) <= difficulty
        mask.append(ok)
    return np.array(mask, dtype=bool)


TP, FP, DROP = 1, 0, -1


def match_frame(dets, gts, criterion: Criterion, valid, min_height=None):
    """Greedy match of one frame. Returns (status, gt_index) per detection."""
    status = np.full(len(dets), FP, dtype=int)
    assigned = np.full(len(dets), -1, dtype=int)
    if len(dets) == 0:
        return status, assigned
    sim = np.full((len(dets), len(gts)), -np.inf)
    for i, d in enumerate(dets):
        for j, g in enumerate(gts):
            sim[i, j] = criterion.similarity(d, g)
    passes = sim >= criterion.threshold
    used = np.zeros(len(gts), dtype=bool)
    order = np.argsort(-np.array([d.score for d in dets], dtype=float), kind="stable")
    for i in order:
        cand = passes[i] & valid & ~used
        if cand.any():
            j = int(np.argmax(np.where(cand, sim[i], -np.inf)))
            used[j] = True
            status[i] = TP
            assigned[i] = j
        elif (passes[i] & ~valid).any():
            status[i] = DROP
        elif min_height is not None and getattr(dets[i], "box2d", None) is not None \
                and dets[i].box2d.h2d < min_height:
            status[i] = DROP
    return status, assigned


def _check_frames(dets_frames, gts_frames):
    if len(dets_frames) != len(gts_frames):
        raise ValueError(f"got {len(dets_frames)} detection frames but {len(gts_frames)} ground-truth frames")


def orientation_similarity(alpha_det: float, alpha_gt: float) -> float:
    return 0.5 * (1.0 + math.cos(alpha_det - alpha_gt))


@dataclass
class FrameMatches:
    scores: list
    is_tp: list
    weights: list
    n_gt: int


def match_frame_records(dets, gts, criterion: Criterion, difficulty=Difficulty.MODERATE,
                        class_name="Car", table: Mapping = DEFAULT_DIFFICULTY) -> FrameMatches:
    """Per-frame half of :func:`evaluate`; results combine with :func:`reduce_matches`."""
    difficulty = None if difficulty is None else Difficulty.parse(difficulty)
    min_height = None if difficulty is None else table[difficulty].min_height
    dets = [d for d in dets if class_name is None or _class_of(d) == class_name]
    valid = _valid_mask(gts, difficulty, class_name, table)
    status, assigned = match_frame(dets, gts, criterion, valid, min_height)
    out = FrameMatches([], [], [], int(valid.sum()))
    for d, s, j in zip(dets, status, assigned):
        if s == DROP:
            continue
        out.scores.append(d.score)
        out.is_tp.append(s == TP)
        out.weights.append(orientation_similarity(d.alpha, gts[j].alpha) if s == TP else 0.0)
    return out


def reduce_matches(frames: Sequence[FrameMatches], n_points: int = 11,
                   orientation: bool = False) -> PRCurve:
    scores, is_tp, weights, n_gt = [], [], [], 0
    for f in frames:
        scores += f.scores
        is_tp += f.is_tp
        weights += f.weights
        n_gt += f.n_gt
    return pr_curve_from_matches(scores, is_tp, n_gt, n_points, weights if orientation else None)


def evaluate(dets_frames: Sequence, gts_frames: Sequence, criterion: Criterion,
             difficulty=Difficulty.MODERATE, class_name="Car", n_points: int = 11,
             orientation: bool = False, table: Mapping = DEFAULT_DIFFICULTY) -> PRCurve:
    """Pool greedy matches over frames into one PR curve.

    With ``orientation=True`` every true positive is weighted by
    ``(1 + cos(alpha_det - alpha_gt)) / 2``, giving the AOS curve.
    """
    _check_frames(dets_frames, gts_frames)
    frames = [match_frame_records(d, g, criterion, difficulty, class_name, table)
              for d, g in zip(dets_frames, gts_frames)]
    return reduce_matches(frames, n_points, orientation)


def ap3d(dets_frames, gts_frames, iou_threshold=0.7, difficulty=Difficulty.MODERATE,
         class_name="Car", n_points=11, table=DEFAULT_DIFFICULTY) -> float:
    curve = evaluate(dets_frames, gts_frames, iou3d_criterion(iou_threshold), difficulty,
                     class_name, n_points, table=table)
    return curve.ap


def alp(dets_frames, gts_frames, distance_threshold_m=1.0, difficulty=Difficulty.MODERATE,
        class_name="Car", n_points=11, table=DEFAULT_DIFFICULTY) -> float:
    """AP with a true positive meaning a bottom center within ``distance_threshold_m``."""
    curve = evaluate(dets_frames, gts_frames, distance_criterion(distance_threshold_m), difficulty,
                     class_name, n_points, table=table)
    return curve.ap


def ap2d(dets_frames, gts_frames, iou_threshold=0.5, difficulty=Difficulty.MODERATE,
         class_name="Car", n_points=11, table=DEFAULT_DIFFICULTY) -> float:
    curve = evaluate(dets_frames, gts_frames, iou2d_criterion(iou_threshold), difficulty,
                     class_name, n_points, table=table)
    return curve.ap


def aos(dets_frames, gts_frames, iou_threshold=0.5, difficulty=Difficulty.MODERATE,
        class_name="Car", n_points=11, table=DEFAULT_DIFFICULTY) -> float:
    curve = evaluate(dets_frames, gts_frames, iou2d_criterion(iou_threshold), difficulty,
                     class_name, n_points, orientation=True, table=table)
    return curve.ap


def _recall(guidance_frames, gts_frames, hit: Callable, difficulty, class_name, table) -> float:
    _check_frames(guidance_frames, gts_frames)
    difficulty = None if difficulty is None else Difficulty.parse(difficulty)
    found = total = 0
    for guides, gts in zip(guidance_frames, gts_frames):
        boxes = [_box3d_of(g) for g in guides]
        for g in gts:
            if isinstance(g, GroundTruth):
                if class_name is not None and g.class_name != class_name:
                    continue
                if difficulty is not None and difficulty_of(g, table) > difficulty:
                    continue
            total += 1
            target = _box3d_of(g)
            if any(hit(b, target) for b in boxes):
                found += 1
    return found / total if total else 0.0


def recall_loc(guidance_frames, gts_frames, threshold_m=2.0, difficulty=None, class_name="Car",
               table=DEFAULT_DIFFICULTY) -> float:
    """Fraction of ground truths with some guidance whose bottom center lies within ``threshold_m``."""
    return _recall(guidance_frames, gts_frames,
                   lambda b, t: center_distance(b, t) <= threshold_m, difficulty, class_name, table)


def recall_3d(guidance_frames, gts_frames, iou_threshold=0.5, difficulty=None, class_name="Car",
              table=DEFAULT_DIFFICULTY) -> float:
    return _recall(guidance_frames, gts_frames,
                   lambda b, t: iou3d(b, t) >= iou_threshold, difficulty, class_name, table)

"""Refinement targets and decoding for guidance boxes.

Two codecs live here and are deliberately kept apart:

* the regression residual (:func:`encode_residual` / :func:`decode_residual`),
  which normalizes offsets by the guidance size and uses log-ratios for sizes;
* the interval classification, which bins the *raw* difference
  ``gt - guidance`` of each parameter into classes centered at
  ``k * sigma`` for ``k = -N..N``.

Flat score/label vectors are laid out dimension by dimension in the order
``w, h, l, x, y, z, theta``, each dimension listing classes from ``-N`` to
``+N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_boxes3d
from .errors import OutOfRange, ShapeMismatch
from .geometry import BOX3D_FIELDS, Box3D, iou2d, wrap_angle
from .metrics import iou3d

DIMS = BOX3D_FIELDS
BCE_EPS = 1e-7

# Per-dimension std of (gt - guidance) on KITTI training data, and class half-counts.
DEFAULT_SIGMA = (0.10, 0.13, 0.41, 0.48, 0.10, 1.65, 0.05)
DEFAULT_N_HALF = (5, 5, 5, 10, 5, 10, 5)


def _dim_index(dim) -> int:
    if isinstance(dim, (int, np.integer)):
        if not 0 <= dim < len(DIMS):
            raise ValueError(f"dimension index {dim} out of range")
        return int(dim)
    try:
        return DIMS.index(dim)
    except ValueError:
        raise ValueError(f"unknown dimension {dim!r}; expected one of {DIMS}") from None


# ---------------------------------------------------------------------------
# regression residuals


@dataclass(frozen=True)
class Residual:
    dx: float
    dy: float
    dz: float
    dl: float
    dw: float
    dh: float
    dtheta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.to_array()):
            raise ValueError("residual components must be finite")

    def to_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.dl, self.dw, self.dh, self.dtheta])


def encode_residual(guidance: Box3D, gt: Box3D) -> Residual:
    diag = math.hypot(guidance.l, guidance.w)
    return Residual(
        dx=(gt.x - guidance.x) / diag,
        dy=(gt.y - guidance.y) / diag,
        dz=(gt.z - guidance.z) / guidance.h,
        dl=math.log(gt.l / guidance.l),
        dw=math.log(gt.w / guidance.w),
        dh=math.log(gt.h / guidance.h),
        dtheta=wrap_angle(gt.theta - guidance.theta),
    )


def decode_residual(guidance: Box3D, r: Residual) -> Box3D:
    diag = math.hypot(guidance.l, guidance.w)
    return Box3D(
        w=guidance.w * math.exp(r.dw),
        h=guidance.h * math.exp(r.dh),
        l=guidance.l * math.exp(r.dl),
        x=guidance.x + r.dx * diag,
        y=guidance.y + r.dy * diag,
        z=guidance.z + r.dz * guidance.h,
        theta=guidance.theta + r.dtheta,
    )


# ---------------------------------------------------------------------------
# interval classification


@dataclass(frozen=True)
class IntervalSpec:
    sigma: tuple = DEFAULT_SIGMA
    n_half: tuple = DEFAULT_N_HALF

    def __post_init__(self):
        sigma = tuple(float(s) for s in self.sigma)
        n_half = tuple(int(n) for n in self.n_half)
        if len(sigma) != len(DIMS) or len(n_half) != len(DIMS):
            raise ValueError(f"IntervalSpec needs {len(DIMS)} sigma and n_half values")
        if any(not (s > 0 and math.isfinite(s)) for s in sigma):
            raise ValueError(f"sigma values must be positive, got {sigma}")
        if any(n < 1 for n in n_half):
            raise ValueError(f"n_half values must be >= 1, got {n_half}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "n_half", n_half)

    @classmethod
    def from_mapping(cls, sigma: Mapping, n_half: Mapping) -> "IntervalSpec":
        return cls(tuple(sigma[d] for d in DIMS), tuple(n_half[d] for d in DIMS))

    def to_mapping(self) -> dict:
        return {"sigma": dict(zip(DIMS, self.sigma)), "n_half": dict(zip(DIMS, self.n_half))}

    def n_classes(self, dim) -> int:
        return 2 * self.n_half[_dim_index(dim)] + 1

    def centers(self, dim) -> np.ndarray:
        i = _dim_index(dim)
        n = self.n_half[i]
        return np.arange(-n, n + 1) * self.sigma[i]

    @property
    def total(self) -> int:
        return sum(2 * n + 1 for n in self.n_half)

    @property
    def offsets(self) -> tuple:
        """Start index of each dimension inside a flat score vector."""
        out, start = [], 0
        for n in self.n_half:
            out.append(start)
            start += 2 * n + 1
        return tuple(out)

    def split(self, flat) -> dict:
        flat = np.asarray(flat, dtype=float).ravel()
        if flat.size != self.total:
            raise ShapeMismatch(f"expected {self.total} values for this interval spec, got {flat.size}")
        return {d: flat[o:o + self.n_classes(d)].copy() for d, o in zip(DIMS, self.offsets)}


DEFAULT_SPEC = IntervalSpec()


def raw_deltas(guidance: Box3D, gt: Box3D) -> np.ndarray:
    """``gt - guidance`` per dimension in ``DIMS`` order, yaw wrapped."""
    d = gt.to_array() - guidance.to_array()
    d[6] = wrap_angle(d[6])
    return d


def classify_delta(spec: IntervalSpec, delta: float, dim) -> int:
    """Index of the nearest interval center; out-of-range deltas clamp to the extremes.

    Exact half-way values round toward +infinity.
    """
    i = _dim_index(dim)
    n = spec.n_half[i]
    k = math.floor(delta / spec.sigma[i] + 0.5)
    return int(min(max(k, -n), n) + n)


def shift_box(box: Box3D, dim, value: float) -> Box3D:
    name = DIMS[_dim_index(dim)]
    return box.replace(**{name: getattr(box, name) + value})


def shifted_candidates(guidance: Box3D, spec: IntervalSpec = DEFAULT_SPEC) -> dict:
    """For each dimension, the guidance moved by every interval center (raw units)."""
    return {d: [shift_box(guidance, d, c) for c in spec.centers(d)] for d in DIMS}


# ---------------------------------------------------------------------------
# quality-aware labels and loss


def quality_label(ov: float) -> float:
    if not 0.0 <= ov <= 1.0:
        raise OutOfRange(f"overlap must lie in [0, 1], got {ov}")
    if ov > 0.75:
        return 1.0
    if ov < 0.25:
        return 0.0
    return 2.0 * ov - 0.5


def quality_bce(p, q, eps: float = BCE_EPS):
    p = np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)
    q = np.asarray(q, dtype=float)
    loss = -(q * np.log(p) + (1.0 - q) * np.log(1.0 - p))
    return float(loss) if loss.ndim == 0 else loss


def quality_bce_grad(p, q, eps: float = BCE_EPS):
    """d(quality_bce)/dp, evaluated at the clipped ``p``."""
    p = np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)
    q = np.asarray(q, dtype=float)
    g = (p - q) / (p * (1.0 - p))
    return float(g) if g.ndim == 0 else g


@dataclass(frozen=True)
class IntervalLabels:
    values: dict
    matched: bool

    def flat(self) -> np.ndarray:
        return np.concatenate([self.values[d] for d in DIMS])


@dataclass(frozen=True)
class IntervalScores:
    values: dict

    def __post_init__(self):
        for d in DIMS:
            v = np.asarray(self.values[d], dtype=float)
            if np.any((v < 0) | (v > 1)) or not np.all(np.isfinite(v)):
                raise ValueError(f"confidences for {d} must lie in [0, 1]")

    @classmethod
    def from_flat(cls, flat, spec: IntervalSpec = DEFAULT_SPEC) -> "IntervalScores":
        return cls(spec.split(flat))

    def flat(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.values[d], dtype=float) for d in DIMS])


def make_interval_labels(guidance: Box3D, gt: Optional[Box3D], spec: IntervalSpec = DEFAULT_SPEC,
                         iou_fn: Callable = iou3d) -> IntervalLabels:
    """Quality labels of every shifted candidate against the matched ground truth.

    ``gt=None`` marks an unmatched (background) guidance: all labels are 0.
    """
    if gt is None:
        return IntervalLabels({d: np.zeros(spec.n_classes(d)) for d in DIMS}, matched=False)
    values = {
        d: np.array([quality_label(iou_fn(c, gt)) for c in cands])
        for d, cands in shifted_candidates(guidance, spec).items()
    }
    return IntervalLabels(values, matched=True)


def match_ground_truth(box2d, gt_boxes2d: Sequence, threshold: float = 0.5) -> Optional[int]:
    """Index of the best 2D-IoU ground truth at or above ``threshold``, else ``None``."""
    best, best_iou = None, threshold
    for j, g in enumerate(gt_boxes2d):
        v = iou2d(box2d, g)
        if v >= best_iou and (best is None or v > best_iou):
            best, best_iou = j, v
    return best


@dataclass(frozen=True)
class Refinement:
    box: Box3D
    confidence: float
    rejected: bool = False
    classes: tuple = ()


def decode_prediction(guidance, scores: IntervalScores, spec: IntervalSpec = DEFAULT_SPEC,
                      reject_threshold: float = 0.1, detection_score: Optional[float] = None) -> Refinement:
    """Shift the guidance by the arg-max interval of every dimension.

    The confidence is the geometric mean of the seven winning confidences
    times the 2D detection score. If no dimension reaches
    ``reject_threshold`` the guidance is treated as background and the
    result is marked rejected with confidence 0.
    """
    if isinstance(guidance, Box3D):
        box = guidance
        det_score = 1.0 if detection_score is None else detection_score
    else:
        box = guidance.box
        det_score = guidance.source.score if detection_score is None else detection_score
    winners, best = [], []
    for d in DIMS:
        v = np.asarray(scores.values[d], dtype=float)
        if v.shape != (spec.n_classes(d),):
            raise ShapeMismatch(f"{d}: expected {spec.n_classes(d)} confidences, got {v.shape}")
        k = int(np.argmax(v))
        winners.append(k)
        best.append(float(v[k]))
    if max(best) < reject_threshold:
        return Refinement(box, 0.0, rejected=True, classes=tuple(winners))
    out = box
    for d, k in zip(DIMS, winners):
        out = shift_box(out, d, float(spec.centers(d)[k]))
    conf = math.prod(best) ** (1.0 / len(best)) * det_score
    return Refinement(out, float(conf), rejected=False, classes=tuple(winners))


# ---------------------------------------------------------------------------
# estimators


class IntervalEncoder(TransformerMixin, BaseEstimator):
    """Bin raw parameter deltas into sigma-spaced intervals (like a fixed-width KBinsDiscretizer).

    ``fit`` takes an ``(n, 7)`` array of deltas ``gt - guidance`` and sets
    ``sigma_`` to their standard deviation and ``n_half_`` so that a
    ``coverage`` fraction of absolute deltas falls within ``n_half_ * sigma_``
    (capped at ``n_max``). Explicit ``sigma`` / ``n_half`` skip the
    corresponding estimate.
    """

    def __init__(self, sigma=None, n_half=None, coverage=0.99, n_max=10):
        self.sigma = sigma
        self.n_half = n_half
        self.coverage = coverage
        self.n_max = n_max

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=2)
        if X.shape[1] != len(DIMS):
            raise ValueError(f"expected {len(DIMS)} delta columns, got {X.shape[1]}")
        X = X.copy()
        X[:, 6] = wrap_angle(X[:, 6])
        sigma = np.asarray(self.sigma, dtype=float) if self.sigma is not None else X.std(axis=0)
        if self.n_half is not None:
            n_half = np.asarray(self.n_half, dtype=int)
        else:
            reach = np.quantile(np.abs(X), self.coverage, axis=0)
            n_half = np.clip(np.ceil(reach / sigma - 0.5), 1, self.n_max).astype(int)
        self.sigma_ = sigma
        self.n_half_ = n_half
        self.range_ = np.stack([X.min(axis=0), X.max(axis=0)], axis=1)
        self.spec_ = IntervalSpec(tuple(sigma), tuple(n_half))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_array(X, dtype=float, ensure_min_samples=0)
        return np.array([[classify_delta(self.spec_, v, j) for j, v in enumerate(row)] for row in X],
                        dtype=int).reshape(-1, len(DIMS))

    def inverse_transform(self, X):
        """Class indices back to interval-center deltas."""
        check_is_fitted(self, "spec_")
        X = check_array(X, dtype=int, ensure_min_samples=0)
        out = np.empty(X.shape, dtype=float)
        for j in range(len(DIMS)):
            out[:, j] = self.spec_.centers(j)[X[:, j]]
        return out


class IntervalRefiner(BaseEstimator):
    """Classification-based refinement of guidance boxes.

    ``fit(X, y)`` with guidance boxes ``X`` and matched ground truths ``y``
    (both ``(n, 7)``) estimates the interval spec unless ``spec`` is given.
    ``predict(X, scores)`` decodes an ``(n, total)`` confidence matrix.
    """

    def __init__(self, spec=None, reject_threshold=0.1, coverage=0.99, n_max=10):
        self.spec = spec
        self.reject_threshold = reject_threshold
        self.coverage = coverage
        self.n_max = n_max

    def fit(self, X, y=None):
        X = check_boxes3d(X)
        if self.spec is not None:
            self.spec_ = self.spec
        else:
            if y is None:
                raise ValueError("y is required to estimate the interval spec")
            Y = check_boxes3d(y, "y")
            deltas = np.array([raw_deltas(Box3D(*g), Box3D(*t)) for g, t in zip(X, Y)])
            enc = IntervalEncoder(coverage=self.coverage, n_max=self.n_max).fit(deltas)
            self.spec_ = enc.spec_
        self.n_features_in_ = 7
        return self

    def decode(self, X, scores, detection_scores=None):
        """Refined boxes, confidences and a rejection mask."""
        check_is_fitted(self, "spec_")
        X = check_boxes3d(X)
        S = check_array(scores, dtype=float, ensure_min_samples=0)
        if S.shape != (len(X), self.spec_.total):
            raise ShapeMismatch(f"scores must have shape ({len(X)}, {self.spec_.total}), got {S.shape}")
        det = np.ones(len(X)) if detection_scores is None else np.asarray(detection_scores, dtype=float)
        boxes = np.empty_like(X)
        conf = np.empty(len(X))
        rejected = np.zeros(len(X), dtype=bool)
        for i, (row, s) in enumerate(zip(X, S)):
            r = decode_prediction(Box3D(*row), IntervalScores.from_flat(s, self.spec_), self.spec_,
                                  self.reject_threshold, float(det[i]))
            boxes[i], conf[i], rejected[i] = r.box.to_array(), r.confidence, r.rejected
        return boxes, conf, rejected

    def predict(self, X, scores, detection_scores=None):
        return self.decode(X, scores, detection_scores)[0]

    def quality_labels(self, X, y):
        """``(n, total)`` quality labels; rows of ``y`` that are all-NaN mark background."""
        check_is_fitted(self, "spec_")
        X = check_boxes3d(X)
        Y = np.asarray(y, dtype=float).reshape(-1, 7)
        out = np.zeros((len(X), self.spec_.total))
        for i, (g, t) in enumerate(zip(X, Y)):
            gt = None if np.all(np.isnan(t)) else Box3D(*t)
            out[i] = make_interval_labels(Box3D(*g), gt, self.spec_).flat()
        return out

"""Coarse 3D cuboids ("guidances") from 2D detections.

A guidance takes its size from per-class priors. Its bottom center comes
from back-projecting the 2D box's top midpoint and a lifted bottom midpoint
through ``K^-1``. The depth is fixed by requiring the normalized height
between the two points to match the prior height, and the yaw is obtained
from the observation angle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_boxes3d, check_camera, check_detections
from .errors import DegenerateHeight, SingularIntrinsics, UnknownClass
from .geometry import Box2D, Box3D, CameraModel, alpha_to_theta, project, wrap_angle

DEGENERATE_HEIGHT_EPS = 1e-6


@dataclass(frozen=True)
class SizePrior:
    class_name: str
    w_bar: float
    h_bar: float
    l_bar: float
    lam: float = 0.0

    def __post_init__(self):
        if not (self.w_bar > 0 and self.h_bar > 0 and self.l_bar > 0):
            raise ValueError(f"prior sizes for {self.class_name!r} must be positive")
        if not 0.0 <= self.lam < 0.5:
            raise ValueError(f"lambda for {self.class_name!r} must lie in [0, 0.5), got {self.lam}")


# Car statistics used when no config file is given.
DEFAULT_PRIORS = {"Car": SizePrior("Car", w_bar=1.62, h_bar=1.53, l_bar=3.89, lam=0.07)}


@dataclass(frozen=True)
class Detection2D:
    box: Box2D
    alpha: float
    class_name: str = "Car"
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must be in [0, 1], got {self.score}")
        object.__setattr__(self, "alpha", wrap_angle(self.alpha))


@dataclass(frozen=True)
class Guidance:
    box: Box3D
    source: Detection2D
    normalized_bottom: tuple
    depth: float


def midpoints(box: Box2D, lam: float):
    """Homogeneous pixel points of the projected top center and bottom center."""
    top = np.array([box.cx, box.cy - 0.5 * box.h2d, 1.0])
    bottom = np.array([box.cx, box.cy + (0.5 - lam) * box.h2d, 1.0])
    return top, bottom


def backproject_normalized(camera: CameraModel, pixel_homog) -> np.ndarray:
    p = np.asarray(pixel_homog, dtype=float)
    if p.shape == (2,):
        p = np.append(p, 1.0)
    ray = camera.K_inv @ p
    if abs(ray[2]) < 1e-12:
        raise SingularIntrinsics("back-projected ray is parallel to the image plane")
    return ray / ray[2]


def estimate_location(camera: CameraModel, box2d: Box2D, prior: SizePrior,
                      eps: float = DEGENERATE_HEIGHT_EPS):
    """Bottom center ``(x, y, z)`` and the camera-frame depth ``d``."""
    top, bottom = midpoints(box2d, prior.lam)
    n_top = backproject_normalized(camera, top)
    n_bottom = backproject_normalized(camera, bottom)
    h_norm = n_bottom[1] - n_top[1]
    if h_norm <= eps:
        raise DegenerateHeight(f"normalized height {h_norm:.3g} is not positive")
    d = prior.h_bar / h_norm
    # undo the translation column of P
    loc = d * n_bottom - camera.t_cam
    return float(loc[0]), float(loc[1]), float(loc[2]), float(d), (float(n_bottom[0]), float(n_bottom[1]))


def generate_guidance(camera: CameraModel, det: Detection2D, priors: Mapping[str, SizePrior],
                      eps: float = DEGENERATE_HEIGHT_EPS) -> Guidance:
    try:
        prior = priors[det.class_name]
    except KeyError:
        raise UnknownClass(f"no size prior for class {det.class_name!r}") from None
    x, y, z, d, nb = estimate_location(camera, det.box, prior, eps=eps)
    theta = alpha_to_theta(det.alpha, x, z)
    box = Box3D(prior.w_bar, prior.h_bar, prior.l_bar, x, y, z, theta)
    return Guidance(box=box, source=det, normalized_bottom=nb, depth=d)


def bottom_lambda(camera: CameraModel, box3d: Box3D, box2d: Box2D) -> float:
    """Fraction of the 2D box height between its bottom edge and the projected bottom center."""
    v = project(camera, box3d.bottom_center)[1]
    _, _, _, bottom = box2d.corners
    return float((bottom - v) / box2d.h2d)


class GuidanceGenerator(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`generate_guidance` for one object class.

    ``transform`` maps an ``(n, 5)`` or ``(n, 6)`` array of detections
    ``[cx, cy, w2d, h2d, alpha(, score)]`` to an ``(n, 7)`` array of
    guidance boxes ``[w, h, l, x, y, z, theta]``.

    ``fit(X, y)`` learns the size prior (mean of ``y`` sizes) and lambda
    (mean bottom offset of the projected ``y`` bottom centers inside the
    ``X`` boxes). Parameters given explicitly are kept as-is.

    Parameters
    ----------
    camera : CameraModel or array-like of shape (3, 4)
    class_name : str
    w_bar, h_bar, l_bar, lam : float or None
        Explicit prior values; ``None`` means "learn in fit", falling back
        to the built-in car prior if ``fit`` is skipped.
    """

    def __init__(self, camera=None, class_name="Car", w_bar=None, h_bar=None, l_bar=None,
                 lam=None, eps=DEGENERATE_HEIGHT_EPS):
        self.camera = camera
        self.class_name = class_name
        self.w_bar = w_bar
        self.h_bar = h_bar
        self.l_bar = l_bar
        self.lam = lam
        self.eps = eps

    def fit(self, X, y=None):
        X = check_detections(X)
        camera = check_camera(self.camera)
        default = DEFAULT_PRIORS.get(self.class_name)
        if y is None:
            learned = {}
        else:
            Y = check_boxes3d(y)
            if len(Y) != len(X):
                raise ValueError(f"X and y have different lengths: {len(X)} vs {len(Y)}")
            if len(Y) == 0:
                raise ValueError("cannot fit priors on zero samples")
            lams = [
                bottom_lambda(camera, Box3D(*row), Box2D(*det[:4]))
                for det, row in zip(X, Y)
            ]
            learned = {"w": Y[:, 0].mean(), "h": Y[:, 1].mean(), "l": Y[:, 2].mean(),
                       "lam": float(np.mean(lams))}

        fallback = {}
        if default is not None:
            fallback = {"w": default.w_bar, "h": default.h_bar, "l": default.l_bar, "lam": default.lam}
        values = {}
        for key, explicit in (("w", self.w_bar), ("h", self.h_bar), ("l", self.l_bar), ("lam", self.lam)):
            if explicit is not None:
                values[key] = float(explicit)
            elif key in learned:
                values[key] = float(learned[key])
            elif key in fallback:
                values[key] = float(fallback[key])
            else:
                raise UnknownClass(f"no prior for {self.class_name!r}; pass it or fit with y")
        self.prior_ = SizePrior(self.class_name, w_bar=values["w"], h_bar=values["h"],
                                l_bar=values["l"], lam=values["lam"])
        self.camera_ = camera
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "prior_")
        X = check_detections(X)
        priors = {self.class_name: self.prior_}
        out = np.empty((len(X), 7))
        for i, row in enumerate(X):
            det = Detection2D(Box2D(*row[:4]), float(row[4]), self.class_name,
                              float(row[5]) if X.shape[1] > 5 else 1.0)
            out[i] = generate_guidance(self.camera_, det, priors, eps=self.eps).box.to_array()
        return out

    def depths(self, X) -> np.ndarray:
        """Camera-frame depth of each guidance, matching :meth:`transform` rows."""
        check_is_fitted(self, "prior_")
        X = check_detections(X)
        return np.array([
            estimate_location(self.camera_, Box2D(*row[:4]), self.prior_, eps=self.eps)[3]
            for row in X
        ])


def generate_guidances(camera: CameraModel, detections: Sequence[Detection2D],
                       priors: Mapping[str, SizePrior]) -> list:
    return [generate_guidance(camera, det, priors) for det in detections]

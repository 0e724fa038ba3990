"""Input checks shared by the estimator classes."""

import numpy as np
from sklearn.utils.validation import check_array

from .geometry import CameraModel


def check_boxes3d(X, name="X"):
    """Coerce to a float ``(n, 7)`` array of ``[w, h, l, x, y, z, theta]`` rows."""
    X = check_array(X, dtype=float, ensure_min_samples=0, input_name=name)
    if X.shape[1] != 7:
        raise ValueError(f"{name} must have 7 columns [w, h, l, x, y, z, theta], got {X.shape[1]}")
    if np.any(X[:, :3] <= 0):
        raise ValueError(f"{name} has non-positive box sizes")
    return X


def check_detections(X, name="X"):
    """Coerce to a float ``(n, 5|6)`` array of ``[cx, cy, w2d, h2d, alpha(, score)]`` rows."""
    X = check_array(X, dtype=float, ensure_min_samples=0, input_name=name)
    if X.shape[1] not in (5, 6):
        raise ValueError(f"{name} must have 5 or 6 columns [cx, cy, w2d, h2d, alpha(, score)], got {X.shape[1]}")
    if np.any(X[:, 2:4] <= 0):
        raise ValueError(f"{name} has non-positive 2D box sizes")
    if X.shape[1] == 6 and np.any((X[:, 5] < 0) | (X[:, 5] > 1)):
        raise ValueError(f"{name} scores must lie in [0, 1]")
    return X


def check_camera(camera):
    if camera is None:
        raise ValueError("camera is required")
    if isinstance(camera, CameraModel):
        return camera
    return CameraModel(camera)

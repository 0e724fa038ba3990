"""Oriented 3D boxes in the camera frame, projection and angle conventions.

Coordinates follow the KITTI camera frame: x right, y down, z forward.
A box stores its *bottom-face* center, so the top face sits at ``y - h``.
Yaw ``theta`` rotates about the y axis; at ``theta = 0`` the box length
points along +x.

Corner ordering used throughout the package (local frame, viewed from above)::

    0 bottom front-left    4 top front-left
    1 bottom rear-left     5 top rear-left
    2 bottom rear-right    6 top rear-right
    3 bottom front-right   7 top front-right

which is counter-clockwise seen from above for both faces.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidDepth, PointBehindCamera, SingularIntrinsics

TWO_PI = 2.0 * math.pi
BOX3D_FIELDS = ("w", "h", "l", "x", "y", "z", "theta")


def wrap_angle(a):
    """Wrap angle(s) into (-pi, pi]. ``pi`` maps to itself."""
    if np.ndim(a) == 0:
        a = float(a)
        r = a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)
        # guard against rounding pushing -pi through
        return math.pi if r <= -math.pi else r
    a = np.asarray(a, dtype=float)
    r = a - TWO_PI * np.ceil((a - np.pi) / TWO_PI)
    return np.where(r <= -np.pi, np.pi, r)


@dataclass(frozen=True)
class Box3D:
    w: float
    h: float
    l: float
    x: float
    y: float
    z: float
    theta: float = 0.0

    def __post_init__(self):
        for name in ("w", "h", "l"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"Box3D.{name} must be positive and finite, got {v!r}")
        for name in ("x", "y", "z", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"Box3D.{name} must be finite")
        for name in BOX3D_FIELDS:
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def to_array(self) -> np.ndarray:
        return np.array([self.w, self.h, self.l, self.x, self.y, self.z, self.theta])

    @classmethod
    def from_array(cls, a) -> "Box3D":
        a = np.asarray(a, dtype=float).ravel()
        if a.shape != (7,):
            raise ValueError(f"expected 7 box parameters, got shape {a.shape}")
        return cls(*a.tolist())

    @property
    def bottom_center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def volume(self) -> float:
        return self.w * self.h * self.l

    def replace(self, **changes) -> "Box3D":
        params = {k: getattr(self, k) for k in BOX3D_FIELDS}
        params.update(changes)
        return Box3D(**params)


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned image box stored as center and size (pixels)."""

    cx: float
    cy: float
    w2d: float
    h2d: float

    def __post_init__(self):
        if not (self.w2d > 0 and self.h2d > 0):
            raise ValueError(f"Box2D needs positive size, got {self.w2d}x{self.h2d}")

    @classmethod
    def from_corners(cls, left, top, right, bottom) -> "Box2D":
        return cls(0.5 * (left + right), 0.5 * (top + bottom), right - left, bottom - top)

    @property
    def corners(self):
        """(left, top, right, bottom)."""
        hw, hh = 0.5 * self.w2d, 0.5 * self.h2d
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    @property
    def area(self) -> float:
        return self.w2d * self.h2d


def iou2d(a: Box2D, b: Box2D) -> float:
    al, at, ar, ab = a.corners
    bl, bt, br, bb = b.corners
    iw = min(ar, br) - max(al, bl)
    ih = min(ab, bb) - max(at, bt)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


class CameraModel:
    """Pinhole camera from a 3x4 projection matrix ``P = K [I | t]``.

    ``P`` is rescaled so that ``K[2, 2] == 1``. The translation ``t`` is
    ``K^-1 @ P[:, 3]``; a point ``X`` projects as ``K (X + t)``.
    """

    def __init__(self, P):
        P = np.array(P, dtype=float)
        if P.shape == (3, 3):
            P = np.hstack([P, np.zeros((3, 1))])
        if P.shape != (3, 4):
            raise ValueError(f"projection matrix must be 3x4, got {P.shape}")
        if not np.all(np.isfinite(P)):
            raise SingularIntrinsics("projection matrix has non-finite entries")
        if abs(P[2, 2]) < 1e-12:
            raise SingularIntrinsics("K[2][2] is zero; cannot normalize")
        P = P / P[2, 2]
        K = P[:, :3]
        if abs(np.linalg.det(K)) < 1e-12:
            raise SingularIntrinsics("intrinsic block K is singular")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise SingularIntrinsics("focal lengths must be positive")
        self.P = P
        self.K = K.copy()
        self.K_inv = np.linalg.inv(K)
        self.t_cam = np.linalg.solve(K, P[:, 3])
        self.P.setflags(write=False)
        self.K.setflags(write=False)
        self.K_inv.setflags(write=False)
        self.t_cam.setflags(write=False)

    @classmethod
    def from_intrinsics(cls, fx, fy, cx, cy, t=(0.0, 0.0, 0.0)) -> "CameraModel":
        K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        return cls(np.hstack([K, (K @ np.asarray(t, dtype=float))[:, None]]))

    @property
    def fx(self) -> float:
        return float(self.K[0, 0])

    @property
    def fy(self) -> float:
        return float(self.K[1, 1])

    @property
    def cx(self) -> float:
        return float(self.K[0, 2])

    @property
    def cy(self) -> float:
        return float(self.K[1, 2])

    def __repr__(self):
        return f"CameraModel(P={self.P.tolist()!r})"

    def __eq__(self, other):
        return isinstance(other, CameraModel) and np.array_equal(self.P, other.P)

    def __hash__(self):
        return hash(self.P.tobytes())


def project_points(camera: CameraModel, points) -> np.ndarray:
    """Project an (n, 3) array of camera-frame points to (n, 2) pixels."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hom = pts @ camera.P[:, :3].T + camera.P[:, 3]
    depth = hom[:, 2]
    if np.any(depth <= 1e-9):
        bad = int(np.argmax(depth <= 1e-9))
        raise PointBehindCamera(f"point {pts[bad].tolist()} is behind the camera")
    return hom[:, :2] / depth[:, None]


def project(camera: CameraModel, point3d) -> np.ndarray:
    return project_points(camera, np.asarray(point3d, dtype=float).reshape(1, 3))[0]


def _local_axes(theta: float):
    """Unit vectors (forward, right, up) of a box with yaw ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    forward = np.array([c, 0.0, -s])
    right = np.array([-s, 0.0, -c])
    up = np.array([0.0, -1.0, 0.0])
    return forward, right, up


# (forward sign, right sign, is_top) for each corner index
_CORNER_SIGNS = np.array(
    [
        [+1, -1, 0],
        [-1, -1, 0],
        [-1, +1, 0],
        [+1, +1, 0],
        [+1, -1, 1],
        [-1, -1, 1],
        [-1, +1, 1],
        [+1, +1, 1],
    ],
    dtype=float,
)


def corners3d(box: Box3D) -> np.ndarray:
    """The 8 corners of ``box`` as an (8, 3) array, ordered as in the module docstring."""
    forward, right, up = _local_axes(box.theta)
    base = box.bottom_center
    return (
        base
        + np.outer(_CORNER_SIGNS[:, 0] * 0.5 * box.l, forward)
        + np.outer(_CORNER_SIGNS[:, 1] * 0.5 * box.w, right)
        + np.outer(_CORNER_SIGNS[:, 2] * box.h, up)
    )


def project_box(camera: CameraModel, box: Box3D) -> Box2D:
    """Tight image-plane box around the projected corners."""
    uv = project_points(camera, corners3d(box))
    left, top = uv.min(axis=0)
    right, bottom = uv.max(axis=0)
    return Box2D.from_corners(float(left), float(top), float(right), float(bottom))


def alpha_to_theta(alpha: float, x: float, z: float) -> float:
    if z <= 0:
        raise InvalidDepth(f"depth must be positive, got z={z}")
    return wrap_angle(alpha + math.atan2(x, z))


def theta_to_alpha(theta: float, x: float, z: float) -> float:
    if z <= 0:
        raise InvalidDepth(f"depth must be positive, got z={z}")
    return wrap_angle(theta - math.atan2(x, z))


class Surface(enum.Enum):
    TOP = "Top"
    FRONT = "Front"
    BACK = "Back"
    LEFT = "LeftSide"
    RIGHT = "RightSide"


# Corner indices per face in (top-left, bottom-left, bottom-right, top-right)
# order as seen from outside the box, i.e. counter-clockwise from outside.
# For the top face "up" in the view is the box's forward direction.
SURFACE_CORNERS = {
    Surface.TOP: (4, 5, 6, 7),
    Surface.FRONT: (7, 3, 0, 4),
    Surface.BACK: (5, 1, 2, 6),
    Surface.RIGHT: (6, 2, 3, 7),
    Surface.LEFT: (4, 0, 1, 5),
}


@dataclass(frozen=True)
class SurfaceSet:
    """Visible faces in fixed order (Top, Front|Back, Left|Right)."""

    surfaces: tuple = field(default_factory=tuple)
    corners: tuple = field(default_factory=tuple)

    @property
    def visible(self) -> tuple:
        return self.surfaces

    def __iter__(self):
        return iter(zip(self.surfaces, self.corners))

    def __len__(self):
        return len(self.surfaces)

    def __contains__(self, item):
        return item in self.surfaces


def visible_surfaces(box: Box3D, alpha: float) -> SurfaceSet:
    """Faces visible at observation angle ``alpha``.

    Strict inequalities at the boundaries: ``alpha == 0`` shows neither front
    nor back, ``alpha == +-pi/2`` falls to the left side.
    """
    alpha = wrap_angle(alpha)
    faces = [Surface.TOP]
    if alpha > 0:
        faces.append(Surface.FRONT)
    elif alpha < 0:
        faces.append(Surface.BACK)
    faces.append(Surface.RIGHT if -math.pi / 2 < alpha < math.pi / 2 else Surface.LEFT)
    pts = corners3d(box)
    quads = tuple(pts[list(SURFACE_CORNERS[f])] for f in faces)
    return SurfaceSet(tuple(faces), quads)


def boxes_to_array(boxes: Iterable[Box3D]) -> np.ndarray:
    rows = [b.to_array() for b in boxes]
    return np.array(rows, dtype=float).reshape(-1, 7)


def boxes_from_array(a: Sequence) -> list:
    a = np.asarray(a, dtype=float).reshape(-1, 7)
    return [Box3D(*row.tolist()) for row in a]

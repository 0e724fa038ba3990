"""Perspective warping of projected box faces onto fixed-size grids.

Grids use corner-aligned coordinates: output cell ``(i, j)`` (row, column)
sits at continuous point ``(x=j, y=i)`` and the four grid corners coincide
with the four quad corners. Quads are given as (top-left, bottom-left,
bottom-right, top-right), the winding produced by
:func:`monoguide.geometry.visible_surfaces`.

Samples that fall outside the feature map read zeros, weighted bilinearly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateQuad
from .geometry import CameraModel, SurfaceSet, project_points

DEFAULT_GRID = (5, 5)


@dataclass(frozen=True)
class FeatureMap:
    data: np.ndarray
    stride: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise ValueError(f"feature map must be (channels, height, width), got shape {data.shape}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def check_quad(quad, tol: float = 1e-12) -> np.ndarray:
    q = np.asarray(quad, dtype=float)
    if q.shape != (4, 2):
        raise DegenerateQuad(f"quad must be 4 points of 2 coordinates, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise DegenerateQuad("quad has non-finite coordinates")
    x, y = q[:, 0], q[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    if area <= tol:
        raise DegenerateQuad(f"quad area {area:.3g} is not positive")
    if _segments_cross(q[0], q[1], q[2], q[3]) or _segments_cross(q[1], q[2], q[3], q[0]):
        raise DegenerateQuad("quad is self-intersecting")
    return q


def _normalizer(pts):
    c = pts.mean(axis=0)
    s = np.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - c, axis=1)), 1e-300)
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def solve_homography(src, dst) -> np.ndarray:
    """3x3 ``H`` with ``H @ (src_k, 1) ~ (dst_k, 1)`` for the four corner pairs.

    Solves the 8x8 direct linear system with ``h33 = 1`` after translating
    and scaling both point sets to unit spread.
    """
    src = check_quad(src)
    dst = check_quad(dst)
    Ts, Td = _normalizer(src), _normalizer(dst)
    s = src @ Ts[:2, :2].T + Ts[:2, 2]
    d = dst @ Td[:2, :2].T + Td[:2, 2]
    A = np.zeros((8, 8))
    b = np.zeros(8)
    for k in range(4):
        x, y = s[k]
        u, v = d[k]
        A[2 * k] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        A[2 * k + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * k], b[2 * k + 1] = u, v
    if np.linalg.cond(A) > 1e12:
        raise DegenerateQuad("point correspondences do not determine a homography")
    h = np.linalg.solve(A, b)
    Hn = np.append(h, 1.0).reshape(3, 3)
    H = np.linalg.solve(Td, Hn @ Ts)
    if abs(H[2, 2]) < 1e-15:
        raise DegenerateQuad("homography is not normalizable")
    H = H / H[2, 2]
    if abs(np.linalg.det(H)) <= 1e-12:
        raise DegenerateQuad("homography is singular")
    return H


def grid_corners(out_size) -> np.ndarray:
    gh, gw = out_size
    if gh < 2 or gw < 2:
        raise ValueError(f"output grid must be at least 2x2, got {gh}x{gw}")
    return np.array([[0.0, 0.0], [0.0, gh - 1.0], [gw - 1.0, gh - 1.0], [gw - 1.0, 0.0]])


def bilinear_sample(data: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample a (C, H, W) array at float positions; out-of-range neighbours read 0."""
    C, H, W = data.shape
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    fx = x - x0
    fy = y - y0
    out = np.zeros((C,) + x.shape)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi, yi = x0 + dx, y0 + dy
            ok = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
            vals = np.zeros((C,) + x.shape)
            vals[:, ok] = data[:, yi[ok], xi[ok]]
            out += vals * (wx * wy)
    return out


def warp_region(fm: FeatureMap, surface_quad_image, out_size=DEFAULT_GRID) -> np.ndarray:
    """Warp the image-space quad of ``fm`` onto an ``out_size`` grid.

    Returns an array of shape ``(channels, gh, gw)``.
    """
    quad = np.asarray(surface_quad_image, dtype=float) / fm.stride
    gh, gw = out_size
    H = solve_homography(quad, grid_corners(out_size))
    H_inv = np.linalg.inv(H)
    ii, jj = np.mgrid[0:gh, 0:gw]
    pts = np.stack([jj.ravel(), ii.ravel(), np.ones(gh * gw)])
    src = H_inv @ pts
    x = (src[0] / src[2]).reshape(gh, gw)
    y = (src[1] / src[2]).reshape(gh, gw)
    return bilinear_sample(fm.data, x, y)


def extract_surface_features(fm: FeatureMap, camera: CameraModel, surfaces: SurfaceSet,
                             out_size=DEFAULT_GRID) -> list:
    """``[(surface, grid), ...]`` in the SurfaceSet order (Top, Front|Back, side)."""
    out = []
    for surface, corners in surfaces:
        quad = project_points(camera, corners)
        out.append((surface, warp_region(fm, quad, out_size)))
    return out

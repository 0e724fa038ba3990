"""Independent reference implementations used as test oracles."""

import math

import numpy as np

from monoguide.geometry import Box3D
from monoguide.warp import grid_corners


def random_quad(rng, size=64, spill=0.0):
    """Convex quad in (TL, BL, BR, TR) order, optionally reaching past the image border."""
    lo, hi = -spill * size, (1 + spill) * size
    x0, x1 = np.sort(rng.uniform(lo, hi, 2))
    y0, y1 = np.sort(rng.uniform(lo, hi, 2))
    if x1 - x0 < 8:
        x1 = x0 + 8
    if y1 - y0 < 8:
        y1 = y0 + 8
    jitter = rng.uniform(-0.2, 0.2, (4, 2)) * [x1 - x0, y1 - y0]
    return np.array([[x0, y0], [x0, y1], [x1, y1], [x1, y0]]) + jitter


def svd_homography(src, dst):
    """Reference: null vector of the 8x9 DLT system, no normalization."""
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    _, _, vt = np.linalg.svd(np.array(rows))
    H = vt[-1].reshape(3, 3)
    return H / H[2, 2]


def apply(H, pts):
    p = np.c_[pts, np.ones(len(pts))] @ H.T
    return p[:, :2] / p[:, 2:]


def reference_warp(data, quad, gh, gw):
    """Pixel-by-pixel inverse mapping with scalar bilinear sampling and zero padding."""
    H = svd_homography(quad, grid_corners((gh, gw)))
    Hi = np.linalg.inv(H)
    C, Hh, Ww = data.shape
    out = np.zeros((C, gh, gw))

    def px(c, yy, xx):
        if 0 <= xx < Ww and 0 <= yy < Hh:
            return data[c, yy, xx]
        return 0.0

    for i in range(gh):
        for j in range(gw):
            s = Hi @ np.array([j, i, 1.0])
            x, y = s[0] / s[2], s[1] / s[2]
            x0, y0 = math.floor(x), math.floor(y)
            fx, fy = x - x0, y - y0
            for c in range(C):
                out[c, i, j] = ((1 - fx) * (1 - fy) * px(c, y0, x0) + fx * (1 - fy) * px(c, y0, x0 + 1)
                                + (1 - fx) * fy * px(c, y0 + 1, x0) + fx * fy * px(c, y0 + 1, x0 + 1))
    return out


def monte_carlo_iou(a: Box3D, b: Box3D, n: int, rng) -> float:
    """Sample uniformly inside ``a`` and count hits inside ``b``."""
    u = rng.uniform(-0.5, 0.5, (n, 3))
    c, s = math.cos(a.theta), math.sin(a.theta)
    fwd, right = np.array([c, 0, -s]), np.array([-s, 0, -c])
    pts = (a.bottom_center + np.outer(u[:, 0] * a.l, fwd) + np.outer(u[:, 1] * a.w, right)
           + np.outer((u[:, 2] + 0.5) * a.h, [0, -1, 0]))
    cb, sb = math.cos(b.theta), math.sin(b.theta)
    rel = pts - b.bottom_center
    along = rel @ np.array([cb, 0, -sb])
    across = rel @ np.array([-sb, 0, -cb])
    up = -rel[:, 1]
    inside = (np.abs(along) <= b.l / 2) & (np.abs(across) <= b.w / 2) & (up >= 0) & (up <= b.h)
    inter = inside.mean() * a.volume
    return inter / (a.volume + b.volume - inter)

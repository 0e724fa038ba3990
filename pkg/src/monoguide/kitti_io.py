"""Strict readers and writers for KITTI object files and the toolkit's own formats.

Grammar shared by every format: fields are separated by any run of spaces
or tabs, leading and trailing whitespace is ignored, blank lines are
skipped, and numbers must use ``.`` as the decimal separator (no locale,
no ``nan``/``inf``, no digit-group underscores). Every other malformed line
raises :class:`ParseError` carrying the 1-based line and field number.

Label line (15 fields, 16 with a trailing score)::

    type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]

Note the KITTI dimension order ``h w l``; :class:`Box3D` uses ``w h l``.
"""

from __future__ import annotations

import re
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ParseError, ShapeMismatch, UnknownMatrixKey
from .geometry import Box2D, Box3D, CameraModel
from .guidance import Detection2D, Guidance
from .metrics import DetectionResult, GroundTruth
from .refine import DEFAULT_SPEC, IntervalScores, IntervalSpec

_NUMBER = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")
_INTEGER = re.compile(r"^[+-]?\d+$")
_SEP = re.compile(r"[ \t]+")

CALIB_ARITY = {
    "P0": 12, "P1": 12, "P2": 12, "P3": 12,
    "R0_rect": 9, "R_rect": 9,
    "Tr_velo_to_cam": 12, "Tr_imu_to_velo": 12, "Tr_velo_cam": 12, "Tr_imu_velo": 12,
}
CALIB_SHAPES = {9: (3, 3), 12: (3, 4)}
DONTCARE = "DontCare"


def _fields(text: str):
    """Yield ``(line_no, fields)`` for every non-blank line."""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip(" \t\r\n")
        if line:
            yield no, _SEP.split(line)


def _number(tok: str, line: int, field: int, source=None) -> float:
    if not _NUMBER.match(tok):
        raise ParseError(f"expected a number, got {tok!r}", line, field, source)
    return float(tok)


def _integer(tok: str, line: int, field: int, source=None) -> int:
    if not _INTEGER.match(tok):
        raise ParseError(f"expected an integer, got {tok!r}", line, field, source)
    return int(tok)


def fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


# ---------------------------------------------------------------------------
# calibration


class CalibFile:
    def __init__(self, matrices: Mapping[str, np.ndarray]):
        self.matrices = OrderedDict((k, np.asarray(v, dtype=float)) for k, v in matrices.items())

    def __getitem__(self, key) -> np.ndarray:
        try:
            return self.matrices[key]
        except KeyError:
            raise UnknownMatrixKey(f"calibration has no matrix {key!r}") from None

    def __contains__(self, key):
        return key in self.matrices

    def keys(self):
        return list(self.matrices)

    def camera(self, key: str = "P2") -> CameraModel:
        return CameraModel(self[key])


def parse_calib(text: str, source=None) -> CalibFile:
    mats = OrderedDict()
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip(" \t\r\n")
        if not line:
            continue
        if ":" not in line:
            raise ParseError("expected 'KEY: values'", no, 1, source)
        key, rest = line.split(":", 1)
        key = key.strip()
        if key not in CALIB_ARITY:
            raise UnknownMatrixKey(f"{source or '<calib>'}, line {no}: unknown matrix key {key!r}")
        if key in mats:
            raise ParseError(f"duplicate matrix {key!r}", no, 1, source)
        toks = _SEP.split(rest.strip(" \t")) if rest.strip(" \t") else []
        n = CALIB_ARITY[key]
        if len(toks) != n:
            raise ParseError(f"{key} needs {n} numbers, got {len(toks)}", no, min(len(toks), n) + 2, source)
        vals = [_number(t, no, i + 2, source) for i, t in enumerate(toks)]
        mats[key] = np.array(vals).reshape(CALIB_SHAPES[n])
    return CalibFile(mats)


def write_calib(calib: CalibFile) -> str:
    lines = []
    for key, m in calib.matrices.items():
        lines.append(f"{key}: " + " ".join(f"{v:.12e}" for v in m.ravel()))
    return "\n".join(lines) + "\n"


def calib_for_camera(camera: CameraModel) -> CalibFile:
    """A KITTI-shaped calibration whose four P matrices all equal ``camera.P``."""
    eye = np.hstack([np.eye(3), np.zeros((3, 1))])
    mats = OrderedDict((f"P{i}", camera.P) for i in range(4))
    mats["R0_rect"] = np.eye(3)
    mats["Tr_velo_to_cam"] = eye
    mats["Tr_imu_to_velo"] = eye
    return CalibFile(mats)


# ---------------------------------------------------------------------------
# labels and results


@dataclass(frozen=True)
class LabelRecord:
    type: str
    truncated: float
    occluded: int
    alpha: float
    left: float
    top: float
    right: float
    bottom: float
    h: float
    w: float
    l: float
    x: float
    y: float
    z: float
    rotation_y: float
    score: Optional[float] = None

    @property
    def is_dontcare(self) -> bool:
        return self.type == DONTCARE

    @property
    def box2d(self) -> Box2D:
        return Box2D.from_corners(self.left, self.top, self.right, self.bottom)

    def to_box3d(self) -> Box3D:
        """KITTI ``(h, w, l)`` dimensions reordered into ``Box3D(w, h, l, ...)``."""
        return Box3D(w=self.w, h=self.h, l=self.l, x=self.x, y=self.y, z=self.z, theta=self.rotation_y)

    @classmethod
    def from_box3d(cls, box: Box3D, box2d: Box2D, alpha: float, type: str = "Car",
                   score: Optional[float] = None, truncated: float = 0.0, occluded: int = 0) -> "LabelRecord":
        left, top, right, bottom = box2d.corners
        return cls(type, truncated, occluded, alpha, left, top, right, bottom,
                   h=box.h, w=box.w, l=box.l, x=box.x, y=box.y, z=box.z,
                   rotation_y=box.theta, score=score)

    def to_ground_truth(self) -> GroundTruth:
        return GroundTruth(self.to_box3d(), self.box2d, self.alpha, self.type,
                           self.truncated, self.occluded)

    def to_detection_result(self) -> DetectionResult:
        return DetectionResult(self.to_box3d(), self.box2d, self.alpha, self.type,
                               1.0 if self.score is None else self.score)

    def to_detection2d(self) -> Detection2D:
        return Detection2D(self.box2d, self.alpha, self.type, 1.0 if self.score is None else self.score)


def _parse_label_line(toks, no, source, require_score=False, check_3d=True) -> LabelRecord:
    n = len(toks)
    if n < 15 or (require_score and n < 16):
        raise ParseError(f"expected {16 if require_score else '15 or 16'} fields, got {n}", no, n + 1, source)
    if n > 16:
        raise ParseError(f"expected at most 16 fields, got {n}", no, 17, source)
    kind = toks[0]
    nums = [_number(t, no, i + 1, source) if i != 2 else None for i, t in enumerate(toks) if i > 0]
    occluded = _integer(toks[2], no, 3, source)
    truncated, alpha = nums[0], nums[2]
    left, top, right, bottom = nums[3:7]
    h, w, l, x, y, z, ry = nums[7:14]
    score = nums[14] if n == 16 else None
    if right <= left:
        raise ParseError(f"bbox right {right} must exceed left {left}", no, 7, source)
    if bottom <= top:
        raise ParseError(f"bbox bottom {bottom} must exceed top {top}", no, 8, source)
    if kind != DONTCARE:
        if not 0.0 <= truncated <= 1.0:
            raise ParseError(f"truncated must lie in [0, 1], got {truncated}", no, 2, source)
        if occluded not in (0, 1, 2, 3):
            raise ParseError(f"occluded must be 0..3, got {occluded}", no, 3, source)
        for idx, v in ((9, h), (10, w), (11, l)):
            if check_3d and v <= 0:
                raise ParseError(f"dimension must be positive, got {v}", no, idx, source)
    return LabelRecord(kind, truncated, occluded, alpha, left, top, right, bottom,
                       h, w, l, x, y, z, ry, score)


def parse_labels(text: str, source=None, require_score: bool = False) -> list:
    return [_parse_label_line(toks, no, source, require_score) for no, toks in _fields(text)]


def format_label(rec: LabelRecord) -> str:
    vals = [rec.type, fmt(rec.truncated), str(int(rec.occluded))]
    vals += [fmt(v) for v in (rec.alpha, rec.left, rec.top, rec.right, rec.bottom,
                              rec.h, rec.w, rec.l, rec.x, rec.y, rec.z, rec.rotation_y)]
    if rec.score is not None:
        vals.append(fmt(rec.score))
    return " ".join(vals)


def write_results(records: Iterable[LabelRecord]) -> str:
    lines = [format_label(r) for r in records]
    return "\n".join(lines) + ("\n" if lines else "")


# 3D fields of a 2D-only result line
SENTINEL_3D = (-1.0, -1.0, -1.0, -1000.0, -1000.0, -1000.0, -10.0)


def detection_record(det: Detection2D) -> LabelRecord:
    left, top, right, bottom = det.box.corners
    return LabelRecord(det.class_name, 0.0, 0, det.alpha, left, top, right, bottom,
                       *SENTINEL_3D, score=det.score)


def read_detections(text: str, source=None) -> list:
    """2D detections in KITTI result format; the score column is mandatory and
    the 3D fields are not checked."""
    out = []
    for no, toks in _fields(text):
        rec = _parse_label_line(toks, no, source, require_score=True, check_3d=False)
        if not 0.0 <= rec.score <= 1.0:
            raise ParseError(f"score must lie in [0, 1], got {rec.score}", no, 16, source)
        out.append(rec.to_detection2d())
    return out


def guidance_record(g: Guidance) -> LabelRecord:
    return LabelRecord.from_box3d(g.box, g.source.box, g.source.alpha, g.source.class_name, g.source.score)


# ---------------------------------------------------------------------------
# toolkit interchange formats


def read_interval_scores(text: str, spec: IntervalSpec = DEFAULT_SPEC, source=None) -> dict:
    """``{guidance_id: IntervalScores}`` from lines ``id c_1 ... c_total``."""
    out = {}
    for no, toks in _fields(text):
        gid = _integer(toks[0], no, 1, source)
        if len(toks) - 1 != spec.total:
            raise ShapeMismatch(f"{source or '<scores>'}, line {no}: expected {spec.total} confidences, "
                                f"got {len(toks) - 1}")
        vals = np.array([_number(t, no, i + 2, source) for i, t in enumerate(toks[1:])])
        bad = np.flatnonzero((vals < 0) | (vals > 1))
        if bad.size:
            raise ParseError(f"confidence {vals[bad[0]]} outside [0, 1]", no, int(bad[0]) + 2, source)
        if gid in out:
            raise ParseError(f"duplicate guidance id {gid}", no, 1, source)
        out[gid] = IntervalScores.from_flat(vals, spec)
    return out


def write_interval_scores(scores: Mapping[int, IntervalScores]) -> str:
    lines = [f"{gid} " + " ".join(fmt(v) for v in s.flat()) for gid, s in sorted(scores.items())]
    return "\n".join(lines) + ("\n" if lines else "")


def write_guidance_sidecar(guidances: Sequence[Guidance]) -> str:
    """One line per guidance: ``id x_norm y_norm depth``."""
    lines = [f"{i} {fmt(g.normalized_bottom[0])} {fmt(g.normalized_bottom[1])} {fmt(g.depth)}"
             for i, g in enumerate(guidances)]
    return "\n".join(lines) + ("\n" if lines else "")


def read_guidance_sidecar(text: str, source=None) -> dict:
    out = {}
    for no, toks in _fields(text):
        if len(toks) != 4:
            raise ParseError(f"expected 4 fields, got {len(toks)}", no, min(len(toks), 4) + 1, source)
        gid = _integer(toks[0], no, 1, source)
        out[gid] = tuple(_number(t, no, i + 2, source) for i, t in enumerate(toks[1:]))
    return out

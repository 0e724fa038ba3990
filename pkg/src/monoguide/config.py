"""Toolkit configuration: class priors, interval spec, difficulty table and defaults.

Stored as YAML. Every section is optional; omitted sections take the
built-in car defaults. A class listed under ``priors`` must give all of
``w``, ``h``, ``l`` and ``lambda``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import DataError
from .geometry import CameraModel
from .guidance import DEFAULT_PRIORS, SizePrior
from .metrics import DEFAULT_DIFFICULTY, Difficulty, DifficultyLevel
from .refine import DEFAULT_SPEC, DIMS, IntervalSpec
from .synth import CAMERA_HEIGHT, KITTI_IMAGE_SIZE, KITTI_P2, SceneSpec


@dataclass
class ToolkitConfig:
    priors: dict = field(default_factory=lambda: dict(DEFAULT_PRIORS))
    intervals: IntervalSpec = DEFAULT_SPEC
    difficulty: dict = field(default_factory=lambda: dict(DEFAULT_DIFFICULTY))
    camera_height: float = CAMERA_HEIGHT
    reject_threshold: float = 0.1
    match_iou_2d: float = 0.5

    def to_mapping(self) -> dict:
        return {
            "camera_height": self.camera_height,
            "reject_threshold": self.reject_threshold,
            "match_iou_2d": self.match_iou_2d,
            "priors": {
                name: {"w": p.w_bar, "h": p.h_bar, "l": p.l_bar, "lambda": p.lam}
                for name, p in self.priors.items()
            },
            "intervals": self.intervals.to_mapping(),
            "difficulty": {
                level.name.lower(): {"min_height": t.min_height, "max_occlusion": t.max_occlusion,
                                     "max_truncation": t.max_truncation}
                for level, t in self.difficulty.items()
            },
        }


def _require(mapping, key, where):
    if not isinstance(mapping, dict) or key not in mapping:
        raise DataError(f"config: {where} is missing {key!r}")
    return mapping[key]


def _number(v, where) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise DataError(f"config: {where} must be a finite number, got {v!r}")
    return float(v)


def parse_intervals(raw) -> IntervalSpec:
    sigma = _require(raw, "sigma", "intervals")
    n_half = _require(raw, "n_half", "intervals")
    try:
        return IntervalSpec(
            tuple(_number(_require(sigma, d, "intervals.sigma"), f"intervals.sigma.{d}") for d in DIMS),
            tuple(int(_require(n_half, d, "intervals.n_half")) for d in DIMS),
        )
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"config: {exc}") from None


def config_from_mapping(raw) -> ToolkitConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise DataError("config: top level must be a mapping")
    known = {"priors", "intervals", "difficulty", "camera_height", "reject_threshold", "match_iou_2d"}
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"config: unknown keys {sorted(unknown)}")
    cfg = ToolkitConfig()
    if "priors" in raw:
        priors = {}
        for name, p in (raw["priors"] or {}).items():
            where = f"priors.{name}"
            try:
                priors[name] = SizePrior(
                    name,
                    _number(_require(p, "w", where), where + ".w"),
                    _number(_require(p, "h", where), where + ".h"),
                    _number(_require(p, "l", where), where + ".l"),
                    _number(_require(p, "lambda", where), where + ".lambda"),
                )
            except ValueError as exc:
                if isinstance(exc, DataError):
                    raise
                raise DataError(f"config: {exc}") from None
        cfg.priors = priors
    if "intervals" in raw:
        cfg.intervals = parse_intervals(raw["intervals"])
    if "difficulty" in raw:
        table = dict(DEFAULT_DIFFICULTY)
        for name, t in (raw["difficulty"] or {}).items():
            try:
                level = Difficulty.parse(name)
            except ValueError:
                raise DataError(f"config: unknown difficulty {name!r}") from None
            where = f"difficulty.{name}"
            table[level] = DifficultyLevel(
                _number(_require(t, "min_height", where), where + ".min_height"),
                int(_require(t, "max_occlusion", where)),
                _number(_require(t, "max_truncation", where), where + ".max_truncation"),
            )
        cfg.difficulty = table
    for key in ("camera_height", "reject_threshold", "match_iou_2d"):
        if key in raw:
            setattr(cfg, key, _number(raw[key], key))
    return cfg


def load_yaml(path):
    try:
        with open(path) as fh:
            return yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise DataError(f"{path}: invalid YAML: {exc}") from None


def load_config(path=None) -> ToolkitConfig:
    if path is None:
        return ToolkitConfig()
    return config_from_mapping(load_yaml(path))


def dump_yaml(mapping) -> str:
    return yaml.safe_dump(mapping, sort_keys=False)


def dump_config(cfg: ToolkitConfig) -> str:
    return dump_yaml(cfg.to_mapping())


# ---------------------------------------------------------------------------
# synthetic dataset description


@dataclass
class SynthConfig:
    scene: SceneSpec
    frames: int = 1
    detection_mode: str = "tight_bbox"
    detection_lambda: float = DEFAULT_PRIORS["Car"].lam
    guidance_noise: dict = None


SYNTH_KEYS = {"seed", "frames", "count", "depth_range", "lateral_range", "yaw_range", "size",
              "camera", "camera_height", "prior", "image_size", "within_image", "min_gap",
              "detections", "guidance_noise"}


def synth_from_mapping(raw) -> SynthConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise DataError("synth spec: top level must be a mapping")
    unknown = set(raw) - SYNTH_KEYS
    if unknown:
        raise DataError(f"synth spec: unknown keys {sorted(unknown)}")
    kw = {}
    for key in ("seed", "count"):
        if key in raw:
            kw[key] = int(raw[key])
    for key in ("depth_range", "lateral_range", "yaw_range"):
        if key in raw:
            lo, hi = raw[key]
            kw[key] = (float(lo), float(hi))
    if "size" in raw:
        size = raw["size"]
        kw["size_mode"] = size.get("mode", "prior")
        if "std" in size:
            kw["size_std"] = tuple(float(v) for v in size["std"])
    if "camera" in raw:
        P = np.asarray(_require(raw["camera"], "P", "camera"), dtype=float).reshape(3, 4)
        kw["camera"] = CameraModel(P)
    if "camera_height" in raw:
        kw["camera_height"] = float(raw["camera_height"])
    if "prior" in raw:
        p = raw["prior"]
        kw["prior"] = SizePrior(p.get("class", "Car"), float(p["w"]), float(p["h"]), float(p["l"]),
                                float(p.get("lambda", 0.0)))
    if "image_size" in raw:
        kw["image_size"] = tuple(int(v) for v in raw["image_size"])
    if "within_image" in raw:
        kw["within_image"] = bool(raw["within_image"])
    if "min_gap" in raw:
        kw["min_gap"] = float(raw["min_gap"])
    det = raw.get("detections") or {}
    noise = raw.get("guidance_noise")
    if noise is not None:
        noise = {d: float(noise.get(d, 0.0)) for d in DIMS}
    try:
        scene = SceneSpec(**kw)
        out = SynthConfig(scene, int(raw.get("frames", 1)), det.get("mode", "tight_bbox"),
                          float(det.get("lambda", scene.prior.lam)), noise)
    except (ValueError, TypeError, KeyError) as exc:
        raise DataError(f"synth spec: {exc}") from None
    return out


def load_synth(path) -> SynthConfig:
    return synth_from_mapping(load_yaml(path))


def default_synth_mapping() -> dict:
    return {
        "seed": 0,
        "frames": 20,
        "count": 5,
        "depth_range": [5.0, 60.0],
        "lateral_range": [-15.0, 15.0],
        "yaw_range": [-math.pi, math.pi],
        "size": {"mode": "prior"},
        "camera": {"P": KITTI_P2.ravel().tolist()},
        "camera_height": CAMERA_HEIGHT,
        "image_size": list(KITTI_IMAGE_SIZE),
        "detections": {"mode": "tight_bbox", "lambda": 0.07},
    }

"""``monoguide`` command line: guide, refine, eval, stats, synth and warp-demo.

Exit codes: 0 success, 1 usage error, 2 data or geometry error, 3 internal error.
Frame directories hold one ``<frame_id>.txt`` per frame, as in KITTI.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import DataError, DegenerateHeight, MonoGuideError, UnknownClass
from .geometry import Box3D, theta_to_alpha, visible_surfaces, wrap_angle
from .guidance import bottom_lambda, generate_guidance
from .kitti_io import (
    LabelRecord,
    calib_for_camera,
    detection_record,
    parse_calib,
    parse_labels,
    read_detections,
    read_interval_scores,
    write_calib,
    write_guidance_sidecar,
    write_results,
)
from .metrics import (
    Difficulty,
    distance_criterion,
    iou2d_criterion,
    iou3d_criterion,
    match_frame_records,
    recall_3d,
    recall_loc,
    reduce_matches,
)
from .refine import DIMS, IntervalEncoder, decode_prediction, match_ground_truth, raw_deltas
from .synth import generate_scene, perfect_detections
from .warp import FeatureMap, extract_surface_features

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DIFFICULTIES = ("easy", "moderate", "hard")


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Context:
    def __init__(self, strict=False):
        self.strict = strict
        self.n_warnings = 0

    def warn(self, msg):
        if self.strict:
            raise DataError(f"{msg} (--strict)")
        self.n_warnings += 1
        print(f"warning: {msg}", file=sys.stderr)

    def warn_all(self, msgs):
        for m in msgs:
            self.warn(m)


# ---------------------------------------------------------------------------
# file helpers


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def frame_ids(directory) -> list:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"{d}: not a directory")
    return sorted(p.stem for p in d.glob("*.txt"))


def read_text(path) -> str:
    try:
        return Path(path).read_text()
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None


def parallel_map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def parse_floats(text: str, n: int, what: str) -> tuple:
    parts = [p for p in text.replace("x", ",").split(",") if p.strip()]
    if len(parts) != n:
        raise UsageError(f"{what} needs {n} comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise UsageError(f"{what}: cannot parse {text!r}") from None


# ---------------------------------------------------------------------------
# guide


def _guide_frame(job):
    fid, det_path, calib_path, priors, camera_key, out_dir = job
    camera = parse_calib(read_text(calib_path), calib_path).camera(camera_key)
    warnings, guides = [], []
    for k, det in enumerate(read_detections(read_text(det_path), det_path)):
        try:
            guides.append(generate_guidance(camera, det, priors))
        except UnknownClass:
            warnings.append(f"{det_path}: detection {k}: no size prior for class {det.class_name!r}, skipped")
        except DegenerateHeight as exc:
            warnings.append(f"{det_path}: detection {k}: {exc}, skipped")
    records = [LabelRecord.from_box3d(g.box, g.source.box, g.source.alpha, g.source.class_name,
                                      g.source.score) for g in guides]
    atomic_write(Path(out_dir) / f"{fid}.txt", write_results(records))
    atomic_write(Path(out_dir) / f"{fid}.guide", write_guidance_sidecar(guides))
    return warnings


def cmd_guide(args, ctx):
    cfg = cfgmod.load_config(args.priors)
    ids = frame_ids(args.detections)
    jobs = [(fid, Path(args.detections) / f"{fid}.txt", Path(args.calib) / f"{fid}.txt",
             cfg.priors, args.camera, args.out) for fid in ids]
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for w in parallel_map(_guide_frame, jobs, args.jobs):
        ctx.warn_all(w)
    print(f"wrote guidances for {len(ids)} frames to {args.out}")


# ---------------------------------------------------------------------------
# refine


def _refine_frame(job):
    fid, guide_path, score_path, spec, threshold, out_dir = job
    warnings = []
    records = parse_labels(read_text(guide_path), guide_path)
    if score_path.exists():
        scores = read_interval_scores(read_text(score_path), spec, score_path)
    else:
        scores = {}
        if records:
            warnings.append(f"{score_path}: missing score file, frame {fid} has no refined output")
    out = []
    for gid in sorted(set(scores) - set(range(len(records)))):
        warnings.append(f"{score_path}: scores for unknown guidance id {gid}")
    for gid, rec in enumerate(records):
        if gid not in scores:
            if score_path.exists():
                warnings.append(f"{score_path}: no scores for guidance {gid}, dropped")
            continue
        r = decode_prediction(rec.to_box3d(), scores[gid], spec, threshold,
                              1.0 if rec.score is None else rec.score)
        if r.rejected:
            continue
        b = r.box
        out.append(LabelRecord.from_box3d(b, rec.box2d, theta_to_alpha(b.theta, b.x, b.z), rec.type,
                                          r.confidence, rec.truncated, rec.occluded))
    atomic_write(Path(out_dir) / f"{fid}.txt", write_results(out))
    return warnings


def cmd_refine(args, ctx):
    cfg = cfgmod.load_config(args.spec)
    threshold = cfg.reject_threshold if args.reject_threshold is None else args.reject_threshold
    if not 0.0 <= threshold <= 1.0:
        raise UsageError(f"--reject-threshold must lie in [0, 1], got {threshold}")
    ids = frame_ids(args.guidances)
    jobs = [(fid, Path(args.guidances) / f"{fid}.txt", Path(args.scores) / f"{fid}.txt",
             cfg.intervals, threshold, args.out) for fid in ids]
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for w in parallel_map(_refine_frame, jobs, args.jobs):
        ctx.warn_all(w)
    print(f"wrote refined results for {len(ids)} frames to {args.out}")


# ---------------------------------------------------------------------------
# eval


def load_gt_frames(gt_dir, ids):
    frames = []
    for fid in ids:
        path = Path(gt_dir) / f"{fid}.txt"
        frames.append([r.to_ground_truth() for r in parse_labels(read_text(path), path)
                       if not r.is_dontcare])
    return frames


def load_result_frames(res_dir, ids, ctx, require_score=True):
    frames = []
    for fid in ids:
        path = Path(res_dir) / f"{fid}.txt"
        if not path.exists():
            ctx.warn(f"{path}: missing result file, counted as no detections")
            frames.append([])
            continue
        recs = parse_labels(read_text(path), path, require_score=require_score)
        frames.append([r.to_detection_result() for r in recs if not r.is_dontcare])
    return frames


def _match_tasks(job):
    dets, gts, tasks, class_name, table = job
    return [match_frame_records(dets, gts, crit, diff, class_name, table) for crit, diff in tasks]


class Column:
    def __init__(self, group, label, metric, threshold, difficulty):
        self.group, self.label = group, label
        self.metric, self.threshold, self.difficulty = metric, threshold, difficulty
        self.value = None
        self.curve = None


def _fmt_threshold(v):
    return f"{v:g}"


def eval_columns(metric, thresholds, difficulties) -> list:
    cols = []
    diffs = [d.capitalize() for d in difficulties]
    if metric == "ap3d":
        for t in thresholds or (0.5, 0.7):
            cols += [Column(f"AP_3D (IoU={_fmt_threshold(t)})", d, "ap3d", t, d) for d in diffs]
    elif metric == "alp":
        for t in thresholds or (1.0,):
            cols += [Column(f"ALP_{_fmt_threshold(t)}m", d, "alp", t, d) for d in diffs]
    elif metric == "aos":
        t = (thresholds or (0.5,))[0]
        cols += [Column(f"AP_2D (IoU={_fmt_threshold(t)})", d, "ap2d", t, d) for d in diffs]
        cols += [Column("AOS", d, "aos", t, d) for d in diffs]
    elif metric == "recall":
        dists, iou = thresholds
        cols += [Column("Recall_loc", f"thr={_fmt_threshold(t)}m", "recall_loc", t, None)
                 for t in dists or (2.0, 1.0)]
        cols += [Column(f"Recall_3D@IoU={_fmt_threshold(iou)}", d, "recall_3d", iou, d) for d in diffs]
    return cols


def format_table(name: str, cols: list) -> str:
    groups = []
    for c in cols:
        if groups and groups[-1][0] == c.group:
            groups[-1][1].append(c)
        else:
            groups.append((c.group, [c]))
    cell = 10
    first = max(len("Method"), len(name))
    head1 = ["Method".ljust(first)]
    head2 = ["".ljust(first)]
    row = [name.ljust(first)]
    for group, members in groups:
        width = max(cell * len(members) + (len(members) - 1), len(group))
        head1.append(group.center(width))
        sub = " ".join(m.label.center(cell) for m in members)
        head2.append(sub.ljust(width))
        vals = " ".join(f"{m.value:.4f}".center(cell) for m in members)
        row.append(vals.ljust(width))
    lines = [" | ".join(head1), " | ".join(head2), " | ".join(row)]
    rule = "-" * len(lines[0])
    return "\n".join([lines[0], lines[1], rule, lines[2]])


def cmd_eval(args, ctx):
    cfg = cfgmod.load_config(args.config)
    if args.points not in (11, 40):
        raise UsageError("--points must be 11 or 40")
    if args.metric == "alp" and args.iou:
        raise UsageError("--iou does not apply to --metric alp; use --dist")
    if args.metric in ("ap3d", "aos") and args.dist:
        raise UsageError(f"--dist does not apply to --metric {args.metric}; use --iou")
    if args.metric == "recall":
        if args.iou and len(args.iou) > 1:
            raise UsageError("--metric recall takes a single --iou")
        thresholds = (args.dist, args.iou[0] if args.iou else 0.5)
    elif args.metric == "alp":
        thresholds = args.dist
    else:
        thresholds = args.iou
    cols = eval_columns(args.metric, thresholds, args.difficulty or DIFFICULTIES)

    ids = frame_ids(args.gt)
    extra = sorted(set(frame_ids(args.results)) - set(ids))
    for fid in extra:
        ctx.warn(f"{Path(args.results) / (fid + '.txt')}: no matching ground-truth frame, ignored")
    gts = load_gt_frames(args.gt, ids)
    dets = load_result_frames(args.results, ids, ctx, require_score=args.metric != "recall")

    if args.metric == "recall":
        for c in cols:
            if c.metric == "recall_loc":
                c.value = recall_loc(dets, gts, c.threshold, None, args.class_name, cfg.difficulty)
            else:
                c.value = recall_3d(dets, gts, c.threshold, c.difficulty, args.class_name, cfg.difficulty)
    else:
        make = {"ap3d": iou3d_criterion, "alp": distance_criterion, "ap2d": iou2d_criterion,
                "aos": iou2d_criterion}
        tasks = []
        for c in cols:
            task = (make[c.metric](c.threshold), Difficulty.parse(c.difficulty))
            if task not in tasks:
                tasks.append(task)
        per_frame = parallel_map(_match_tasks, [(d, g, tasks, args.class_name, cfg.difficulty)
                                                for d, g in zip(dets, gts)], args.jobs)
        for c in cols:
            k = tasks.index((make[c.metric](c.threshold), Difficulty.parse(c.difficulty)))
            c.curve = reduce_matches([f[k] for f in per_frame], args.points, orientation=c.metric == "aos")
            c.value = c.curve.ap

    name = args.name or Path(args.results).name
    print(format_table(name, cols))
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "metric", "threshold", "difficulty", "value"])
        for c in cols:
            w.writerow([name, c.metric, _fmt_threshold(c.threshold), (c.difficulty or "all").lower(),
                        f"{c.value:.4f}"])
        atomic_write(args.csv, buf.getvalue())
    if args.pr_csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "threshold", "difficulty", "recall", "precision"])
        for c in cols:
            if c.curve is None:
                continue
            for r, p in zip(c.curve.recall, c.curve.precision):
                w.writerow([c.metric, _fmt_threshold(c.threshold), c.difficulty.lower(), f"{r:.6f}", f"{p:.6f}"])
        atomic_write(args.pr_csv, buf.getvalue())


# ---------------------------------------------------------------------------
# stats


def collect_deltas(gt_dir, guide_dir, ids, class_name, iou_threshold, ctx):
    """``(deltas, matched_gts)`` over guidances that overlap a ground truth in 2D."""
    deltas, matched = [], []
    for fid in ids:
        gpath = Path(guide_dir) / f"{fid}.txt"
        if not gpath.exists():
            ctx.warn(f"{gpath}: missing guidance file, frame skipped")
            continue
        gts = [r for r in parse_labels(read_text(Path(gt_dir) / f"{fid}.txt"), Path(gt_dir) / f"{fid}.txt")
               if not r.is_dontcare and (class_name is None or r.type == class_name)]
        guides = [r for r in parse_labels(read_text(gpath), gpath)
                  if class_name is None or r.type == class_name]
        boxes2d = [r.box2d for r in gts]
        for g in guides:
            j = match_ground_truth(g.box2d, boxes2d, iou_threshold)
            if j is None:
                continue
            deltas.append(raw_deltas(g.to_box3d(), gts[j].to_box3d()))
            matched.append(gts[j])
    return np.array(deltas).reshape(-1, len(DIMS)), matched


def stats_table(enc: IntervalEncoder) -> str:
    lines = [f"{'dim':<6} {'std':>10} {'min':>10} {'max':>10} {'range/std':>10} {'n_half':>7}"]
    for j, d in enumerate(DIMS):
        lo, hi = enc.range_[j]
        ratio = (hi - lo) / enc.sigma_[j] if enc.sigma_[j] > 0 else math.inf
        lines.append(f"{d:<6} {enc.sigma_[j]:>10.4f} {lo:>10.4f} {hi:>10.4f} {ratio:>10.2f} {enc.n_half_[j]:>7d}")
    return "\n".join(lines)


def cmd_stats(args, ctx):
    cfg = cfgmod.load_config(args.config)
    ids = frame_ids(args.gt)
    iou = cfg.match_iou_2d if args.match_iou is None else args.match_iou
    deltas, matched = collect_deltas(args.gt, args.guidances, ids, args.class_name, iou, ctx)
    if len(deltas) < 2:
        raise DataError(f"only {len(deltas)} guidance/ground-truth matches; need at least 2")
    if np.any(deltas.std(axis=0) <= 0):
        raise DataError("a dimension has zero spread; cannot size its intervals")
    enc = IntervalEncoder(coverage=args.coverage, n_max=args.n_max).fit(deltas)
    print(f"{len(deltas)} matched guidances")
    print(stats_table(enc))
    out = {"intervals": enc.spec_.to_mapping()}
    if args.calib:
        by_class = {}
        for fid in ids:
            path = Path(args.calib) / f"{fid}.txt"
            camera = parse_calib(read_text(path), path).camera(args.camera)
            lpath = Path(args.gt) / f"{fid}.txt"
            for r in parse_labels(read_text(lpath), lpath):
                if r.is_dontcare or (args.class_name is not None and r.type != args.class_name):
                    continue
                by_class.setdefault(r.type, []).append((r.w, r.h, r.l, bottom_lambda(camera, r.to_box3d(), r.box2d)))
        priors = {}
        for name, rows in sorted(by_class.items()):
            a = np.array(rows)
            priors[name] = {"w": float(a[:, 0].mean()), "h": float(a[:, 1].mean()),
                            "l": float(a[:, 2].mean()), "lambda": float(a[:, 3].mean())}
        out["priors"] = priors
    text = cfgmod.dump_yaml(out)
    if args.out:
        atomic_write(args.out, text)
        print(f"wrote interval config to {args.out}")
    else:
        print()
        print(text, end="")


# ---------------------------------------------------------------------------
# synth


def noise_rng(seed: int, frame: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(frame), 1])))


def noisy_guidance(gt: Box3D, noise: dict, rng: np.random.Generator) -> Box3D:
    """Guidance whose raw delta ``gt - guidance`` is a Gaussian draw (one normal per dimension, DIMS order)."""
    draw = np.array([rng.normal(0.0, noise[d]) if noise[d] > 0 else 0.0 for d in DIMS])
    a = gt.to_array() - draw
    if np.any(a[:3] <= 0):
        raise DataError("guidance noise produced a non-positive size; lower the size noise")
    a[6] = wrap_angle(a[6])
    return Box3D.from_array(a)


def _synth_frame(job):
    k, sc, out = job
    spec = sc.scene
    fid = f"{k:06d}"
    scene = generate_scene(spec, k)
    labels = [LabelRecord.from_box3d(g.box3d, g.box2d, g.alpha, g.class_name) for g in scene]
    atomic_write(out / "label_2" / f"{fid}.txt", write_results(labels))
    atomic_write(out / "oracle_2" / f"{fid}.txt",
                 write_results([LabelRecord.from_box3d(g.box3d, g.box2d, g.alpha, g.class_name, 1.0)
                                for g in scene]))
    atomic_write(out / "calib" / f"{fid}.txt", write_calib(calib_for_camera(spec.camera)))
    dets = perfect_detections(scene, spec.camera, sc.detection_mode, sc.detection_lambda)
    atomic_write(out / "detection_2" / f"{fid}.txt", write_results([detection_record(d) for d in dets]))
    if sc.guidance_noise is not None:
        rng = noise_rng(spec.seed, k)
        recs = []
        for g in scene:
            b = noisy_guidance(g.box3d, sc.guidance_noise, rng)
            recs.append(LabelRecord.from_box3d(b, g.box2d, theta_to_alpha(b.theta, b.x, b.z), g.class_name, 1.0))
        atomic_write(out / "guidance_2" / f"{fid}.txt", write_results(recs))
    return len(scene)


def cmd_synth(args, ctx):
    sc = cfgmod.load_synth(args.spec) if args.spec else cfgmod.synth_from_mapping(cfgmod.default_synth_mapping())
    if args.frames is not None:
        sc.frames = args.frames
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        counts = parallel_map(_synth_frame, [(k, sc, out) for k in range(sc.frames)], args.jobs)
    except RuntimeError as exc:
        raise DataError(str(exc)) from None
    print(f"wrote {sc.frames} frames, {sum(counts)} objects to {out}")


# ---------------------------------------------------------------------------
# warp-demo


def load_feature(path) -> np.ndarray:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".npy":
        data = np.load(path)
    elif suffix in (".pgm", ".ppm", ".pnm", ".pbm"):
        from PIL import Image

        with Image.open(path) as im:
            data = np.asarray(im, dtype=float)
        if data.ndim == 3:
            data = np.moveaxis(data, -1, 0)
    else:
        raise DataError(f"{path}: unsupported feature format {suffix!r} (use .npy or PGM/PPM)")
    data = np.asarray(data, dtype=float)
    if data.ndim not in (2, 3):
        raise DataError(f"{path}: feature array must be 2D or 3D, got shape {data.shape}")
    return data


def cmd_warp_demo(args, ctx):
    w, h, l, x, y, z, theta = parse_floats(args.box, 7, "--box")
    size = parse_floats(args.size, 2, "--size")
    gh, gw = (int(v) for v in size)
    if gh < 2 or gw < 2 or size != (gh, gw):
        raise UsageError(f"--size needs two integers >= 2, got {args.size!r}")
    if args.stride < 1:
        raise UsageError("--stride must be >= 1")
    camera = parse_calib(read_text(args.calib), args.calib).camera(args.camera)
    box = Box3D(w, h, l, x, y, z, theta)
    fm = FeatureMap(load_feature(args.feature), args.stride)
    surfaces = visible_surfaces(box, theta_to_alpha(box.theta, box.x, box.z))
    grids = extract_surface_features(fm, camera, surfaces, (gh, gw))
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["surface", "channel", "i", "j", "value"])
    for surface, grid in grids:
        for c in range(grid.shape[0]):
            for i in range(grid.shape[1]):
                for j in range(grid.shape[2]):
                    wr.writerow([surface.value, c, i, j, repr(float(grid[c, i, j]))])
    atomic_write(args.out, buf.getvalue())
    print(f"wrote {len(grids)} surfaces ({', '.join(s.value for s, _ in grids)}) to {args.out}")


# ---------------------------------------------------------------------------
# parser


def positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--strict", action="store_true", help="treat warnings as errors")
    common.add_argument("--jobs", type=positive_int, default=1, help="worker processes for per-frame work")

    p = ArgumentParser(prog="monoguide", description="Monocular 3D detection toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("guide", parents=[common], help="2D detections -> guidance cuboids")
    g.add_argument("--calib", required=True, help="directory of KITTI calib files")
    g.add_argument("--detections", required=True, help="directory of 2D detections (KITTI result format)")
    g.add_argument("--priors", help="toolkit config with class priors (default: built-in car prior)")
    g.add_argument("--camera", default="P2", help="projection matrix key (default P2)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_guide)

    r = sub.add_parser("refine", parents=[common], help="decode interval scores into refined boxes")
    r.add_argument("--guidances", required=True, help="output directory of the guide command")
    r.add_argument("--scores", required=True, help="directory of per-frame interval score files")
    r.add_argument("--spec", help="toolkit config with the interval spec (default: built-in)")
    r.add_argument("--reject-threshold", type=float, default=None)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_refine)

    e = sub.add_parser("eval", parents=[common], help="AP_3D, ALP, AOS and recall tables")
    e.add_argument("--gt", required=True)
    e.add_argument("--results", required=True)
    e.add_argument("--metric", required=True, choices=("ap3d", "alp", "aos", "recall"))
    e.add_argument("--iou", type=float, action="append", help="IoU threshold (repeatable)")
    e.add_argument("--dist", type=float, action="append", help="distance threshold in metres (repeatable)")
    e.add_argument("--difficulty", action="append", choices=DIFFICULTIES)
    e.add_argument("--class", dest="class_name", default="Car")
    e.add_argument("--points", type=int, default=11, help="interpolation points: 11 or 40")
    e.add_argument("--name", help="row label (default: results directory name)")
    e.add_argument("--config", help="toolkit config (difficulty table)")
    e.add_argument("--csv", help="also write the table as CSV")
    e.add_argument("--pr-csv", help="write the precision/recall curves as CSV")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", parents=[common], help="residual statistics -> interval spec")
    s.add_argument("--gt", required=True)
    s.add_argument("--guidances", required=True)
    s.add_argument("--calib", help="also estimate class priors and lambda from these calib files")
    s.add_argument("--camera", default="P2")
    s.add_argument("--class", dest="class_name", default="Car")
    s.add_argument("--config", help="toolkit config (2D match IoU)")
    s.add_argument("--match-iou", type=float, default=None)
    s.add_argument("--coverage", type=float, default=0.99)
    s.add_argument("--n-max", type=positive_int, default=10)
    s.add_argument("--out", help="write the YAML here instead of stdout")
    s.set_defaults(func=cmd_stats)

    y = sub.add_parser("synth", parents=[common], help="synthetic KITTI-style dataset")
    y.add_argument("--spec", help="synthetic scene YAML (default: built-in)")
    y.add_argument("--frames", type=positive_int, default=None)
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_synth)

    w = sub.add_parser("warp-demo", parents=[common], help="warp visible faces of a box to CSV grids")
    w.add_argument("--calib", required=True, help="KITTI calib file")
    w.add_argument("--camera", default="P2")
    w.add_argument("--box", required=True, help="w,h,l,x,y,z,theta")
    w.add_argument("--feature", required=True, help=".npy array (C,H,W) or (H,W), or PGM/PPM image")
    w.add_argument("--stride", type=float, default=1.0)
    w.add_argument("--size", default="5x5", help="grid rows x columns (default 5x5)")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_warp_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    ctx = Context(args.strict)
    try:
        args.func(args, ctx)
    except UsageError as exc:
        print(f"monoguide {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MonoGuideError, ValueError, OSError) as exc:
        print(f"monoguide {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"monoguide {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

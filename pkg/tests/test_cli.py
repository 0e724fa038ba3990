import csv
import subprocess
import sys

import numpy as np
import pytest
import yaml

from monoguide import cli
from monoguide.config import load_config
from monoguide.kitti_io import parse_labels, write_interval_scores
from monoguide.refine import DEFAULT_SIGMA, DEFAULT_SPEC, raw_deltas
from monoguide.synth import oracle_scores


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    spec = root / "spec.yaml"
    spec.write_text(yaml.safe_dump({
        "seed": 5, "frames": 12, "count": 4,
        "detections": {"mode": "exact_lambda", "lambda": 0.07},
        "guidance_noise": {"w": 0.05, "h": 0.05, "l": 0.2, "x": 0.3, "y": 0.05, "z": 1.0, "theta": 0.03},
    }))
    assert cli.main(["synth", "--spec", str(spec), "--out", str(root / "data")]) == 0
    return root / "data"


def test_synth_layout(dataset):
    for sub in ("label_2", "calib", "detection_2", "oracle_2", "guidance_2"):
        assert len(list((dataset / sub).glob("*.txt"))) == 12
    assert not list(dataset.rglob("*.tmp"))


@pytest.mark.parametrize("metric", ["ap3d", "alp", "aos"])
def test_eval_perfect_results(capsys, dataset, metric):
    code, out, _ = run(capsys, "eval", "--gt", dataset / "label_2", "--results", dataset / "oracle_2",
                       "--metric", metric)
    assert code == 0
    lines = out.strip().splitlines()
    assert "Easy" in lines[1] and "Moderate" in lines[1] and "Hard" in lines[1]
    values = lines[-1].split("|")[1:]
    nums = [v for cell in values for v in cell.split()]
    assert nums and all(v == "1.0000" for v in nums)


def test_eval_csv_and_pr_curve(capsys, dataset, tmp_path):
    code, out, _ = run(capsys, "eval", "--gt", dataset / "label_2", "--results", dataset / "oracle_2",
                       "--metric", "ap3d", "--iou", 0.7, "--difficulty", "moderate", "--points", 40,
                       "--csv", tmp_path / "t.csv", "--pr-csv", tmp_path / "pr.csv", "--name", "oracle")
    assert code == 0
    assert "AP_3D (IoU=0.7)" in out and "AP_3D (IoU=0.5)" not in out
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert rows == [{"method": "oracle", "metric": "ap3d", "threshold": "0.7", "difficulty": "moderate",
                     "value": "1.0000"}]
    pr = list(csv.DictReader(open(tmp_path / "pr.csv")))
    assert pr and all(float(r["precision"]) == 1.0 for r in pr)


def test_guide_then_recall(capsys, dataset, tmp_path):
    out_dir = tmp_path / "guide"
    code, _, _ = run(capsys, "guide", "--calib", dataset / "calib", "--detections", dataset / "detection_2",
                     "--out", out_dir)
    assert code == 0
    assert len(list(out_dir.glob("*.guide"))) == 12
    gts = parse_labels((dataset / "label_2" / "000003.txt").read_text())
    guides = parse_labels((out_dir / "000003.txt").read_text())
    for g, t in zip(guides, gts):
        # detections went through 6-decimal files, so the exact construction holds to ~1e-4
        assert np.max(np.abs(raw_deltas(g.to_box3d(), t.to_box3d()))) < 1e-3
    code, out, _ = run(capsys, "eval", "--gt", dataset / "label_2", "--results", out_dir, "--metric", "recall")
    assert code == 0
    assert "Recall_loc" in out and "thr=2m" in out and "Recall_3D@IoU=0.5" in out
    assert out.strip().splitlines()[-1].count("1.0000") == 5


def test_guide_jobs_is_deterministic(capsys, dataset, tmp_path):
    run(capsys, "guide", "--calib", dataset / "calib", "--detections", dataset / "detection_2", "--out", tmp_path / "a")
    run(capsys, "guide", "--calib", dataset / "calib", "--detections", dataset / "detection_2", "--out", tmp_path / "b",
        "--jobs", 3)
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_text() == (tmp_path / "b" / f.name).read_text()


def test_refine_with_oracle_scores(capsys, dataset, tmp_path):
    scores_dir = tmp_path / "scores"
    scores_dir.mkdir()
    for path in sorted((dataset / "guidance_2").glob("*.txt")):
        guides = parse_labels(path.read_text())
        gts = parse_labels((dataset / "label_2" / path.name).read_text())
        scores = {i: oracle_scores(g.to_box3d(), t.to_box3d(), DEFAULT_SPEC) for i, (g, t) in enumerate(zip(guides, gts))}
        (scores_dir / path.name).write_text(write_interval_scores(scores))
    code, out, _ = run(capsys, "refine", "--guidances", dataset / "guidance_2", "--scores", scores_dir,
                       "--out", tmp_path / "refined")
    assert code == 0
    for path in sorted((tmp_path / "refined").glob("*.txt")):
        refined = parse_labels(path.read_text(), require_score=True)
        gts = parse_labels((dataset / "label_2" / path.name).read_text())
        guides = parse_labels((dataset / "guidance_2" / path.name).read_text())
        assert len(refined) == len(gts)
        for r, t, g in zip(refined, gts, guides):
            inside = np.abs(raw_deltas(g.to_box3d(), t.to_box3d())) <= np.array(DEFAULT_SPEC.n_half) * DEFAULT_SIGMA
            err = np.abs(raw_deltas(r.to_box3d(), t.to_box3d()))
            assert np.all(err[inside] <= np.array(DEFAULT_SIGMA)[inside] / 2 + 2e-6)
            assert r.score == pytest.approx(1.0)


def test_refine_rejects_and_warns(capsys, dataset, tmp_path):
    scores_dir = tmp_path / "scores"
    scores_dir.mkdir()
    low = " ".join(["0.01"] * 97)
    (scores_dir / "000000.txt").write_text(f"0 {low}\n")
    code, _, err = run(capsys, "refine", "--guidances", dataset / "guidance_2", "--scores", scores_dir,
                       "--out", tmp_path / "refined")
    assert code == 0
    assert "missing score file" in err and "no scores for guidance 1" in err
    assert (tmp_path / "refined" / "000000.txt").read_text() == ""
    code, _, err = run(capsys, "refine", "--strict", "--guidances", dataset / "guidance_2", "--scores", scores_dir,
                       "--out", tmp_path / "refined2")
    assert code == 2 and "--strict" in err


def test_stats_outputs_interval_config(capsys, dataset, tmp_path):
    out = tmp_path / "spec.yaml"
    code, text, _ = run(capsys, "stats", "--gt", dataset / "label_2", "--guidances", dataset / "guidance_2",
                        "--calib", dataset / "calib", "--out", out)
    assert code == 0
    assert "48 matched guidances" in text
    cfg = load_config(out)
    assert cfg.intervals.sigma[5] == pytest.approx(1.0, rel=0.3)
    assert cfg.priors["Car"].w_bar == pytest.approx(1.62)
    assert 0.0 < cfg.priors["Car"].lam < 0.5
    code, text, _ = run(capsys, "stats", "--gt", dataset / "label_2", "--guidances", dataset / "guidance_2")
    assert code == 0 and "intervals:" in text and "n_half:" in text


def test_warp_demo(capsys, tmp_path):
    calib = tmp_path / "calib.txt"
    calib.write_text("P2: 7.215377e+02 0 6.095593e+02 4.485728e+01 0 7.215377e+02 1.728540e+02 2.163791e-01 "
                     "0 0 1 2.745884e-03\n")
    feat = tmp_path / "f.npy"
    np.save(feat, np.random.default_rng(0).normal(size=(2, 94, 311)))
    out = tmp_path / "w.csv"
    code, text, _ = run(capsys, "warp-demo", "--calib", calib, "--box", "1.62,1.53,3.89,2.0,1.65,15.0,0.6",
                        "--feature", feat, "--stride", 4, "--size", "5x6", "--out", out)
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 3 * 2 * 5 * 6
    assert {r["surface"] for r in rows} == {"Top", "Front", "RightSide"}

    from PIL import Image

    pgm = tmp_path / "f.pgm"
    Image.fromarray(np.arange(200 * 300, dtype=np.uint8).reshape(200, 300)).save(pgm)
    code, _, _ = run(capsys, "warp-demo", "--calib", calib, "--box", "1.62,1.53,3.89,2.0,1.65,15.0,-2.0",
                     "--feature", pgm, "--stride", 4, "--out", tmp_path / "p.csv")
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "p.csv")))
    assert len(rows) == 3 * 25 and {r["surface"] for r in rows} == {"Top", "Back", "LeftSide"}


def test_usage_errors(capsys, dataset, tmp_path):
    assert run(capsys, "eval", "--gt", dataset / "label_2")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "eval", "--gt", dataset / "label_2", "--results", dataset / "oracle_2",
               "--metric", "ap3d", "--points", 7)[0] == 1
    assert run(capsys, "eval", "--gt", dataset / "label_2", "--results", dataset / "oracle_2",
               "--metric", "alp", "--iou", 0.5)[0] == 1
    assert run(capsys, "warp-demo", "--calib", "x", "--box", "1,2,3", "--feature", "f.npy", "--out", tmp_path / "o")[0] == 1
    assert run(capsys, "synth", "--out", tmp_path / "s", "--jobs", 0)[0] == 1
    assert run(capsys, "--help")[0] == 0


def test_data_errors_are_located(capsys, dataset, tmp_path):
    gt = tmp_path / "gt"
    gt.mkdir()
    (gt / "000000.txt").write_text("Car 0.00 0 1.85 387.63 181.54 423.81 203.12 1.67 1.87 3.69 -16.53 2.39 58.49\n")
    code, _, err = run(capsys, "eval", "--gt", gt, "--results", dataset / "oracle_2", "--metric", "ap3d")
    assert code == 2
    assert "000000.txt, line 1, field 15" in err
    code, _, err = run(capsys, "eval", "--gt", tmp_path / "missing", "--results", gt, "--metric", "ap3d")
    assert code == 2 and "not a directory" in err


def test_strict_missing_results(capsys, dataset, tmp_path):
    res = tmp_path / "res"
    res.mkdir()
    code, _, err = run(capsys, "eval", "--gt", dataset / "label_2", "--results", res, "--metric", "ap3d")
    assert code == 0 and "missing result file" in err
    code, _, _ = run(capsys, "eval", "--strict", "--gt", dataset / "label_2", "--results", res, "--metric", "ap3d")
    assert code == 2


def test_internal_error_exit_code(capsys, dataset, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("invariant violated")

    monkeypatch.setattr(cli, "reduce_matches", boom)
    code, _, err = run(capsys, "eval", "--gt", dataset / "label_2", "--results", dataset / "oracle_2", "--metric", "ap3d")
    assert code == 3 and "internal error" in err


def test_console_entry_point(dataset):
    proc = subprocess.run([sys.executable, "-m", "monoguide", "eval", "--gt", str(dataset / "label_2"),
                           "--results", str(dataset / "oracle_2"), "--metric", "alp", "--dist", "1", "--dist", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "ALP_1m" in proc.stdout and "ALP_2m" in proc.stdout

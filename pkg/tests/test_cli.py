"""End-to-end CLI behavior: file contracts, exit codes, idempotence."""

import json

import numpy as np
import pytest

from scalepose import fileio
from scalepose.cli import main
from scalepose.geometry import rotation_error_deg
from scalepose.scale import CategoryStats
from scalepose.synth import NoiseSpec, run_grid, sample_scene


@pytest.fixture
def solve_fixture(tmp_path):
    scene = sample_scene("laptop", rng_seed=5)
    corr = tmp_path / "corr.json"
    intr = tmp_path / "intrinsics.json"
    stats = tmp_path / "stats.json"
    fileio.save_correspondences(scene.pixels, scene.model.points, str(corr))
    fileio.save_intrinsics(scene.intrinsics, str(intr))
    fileio.save_stats([CategoryStats("laptop", scene.scale, 0.01, 5)], str(stats))
    return scene, corr, intr, stats


class TestSolve:
    def test_recovers_fixture_pose(self, tmp_path, solve_fixture):
        scene, corr, intr, stats = solve_fixture
        out = tmp_path / "pose.json"
        rc = main(
            [
                "solve",
                "--correspondences", str(corr),
                "--intrinsics", str(intr),
                "--stats", str(stats),
                "--category", "laptop",
                "--delta", "0.0",
                "--output", str(out),
            ]
        )
        assert rc == 0
        payload = json.loads(out.read_text())
        rot = np.asarray(payload["pose"]["rotation"]).reshape(3, 3)
        assert rotation_error_deg(rot, scene.pose.rotation) < 1e-6
        trans = np.asarray(payload["pose"]["translation"])
        assert np.linalg.norm(trans - scene.pose.translation) < 1e-6
        assert payload["scale"] == pytest.approx(scene.scale)
        assert payload["inlier_count"] == len(scene.pixels)
        assert payload["rng_seed"] == 0

    def test_missing_file_exits_one(self, tmp_path, solve_fixture, capsys):
        _, _, intr, _ = solve_fixture
        rc = main(
            [
                "solve",
                "--correspondences", str(tmp_path / "absent.json"),
                "--intrinsics", str(intr),
                "--output", str(tmp_path / "o.json"),
            ]
        )
        assert rc == 1
        assert "absent.json" in capsys.readouterr().err

    def test_three_points_exits_two(self, tmp_path, solve_fixture, capsys):
        scene, _, intr, _ = solve_fixture
        corr3 = tmp_path / "c3.json"
        fileio.save_correspondences(scene.pixels[:3], scene.model.points[:3], str(corr3))
        rc = main(
            [
                "solve",
                "--correspondences", str(corr3),
                "--intrinsics", str(intr),
                "--scale", "0.4",
                "--output", str(tmp_path / "o.json"),
            ]
        )
        assert rc == 2
        assert "InsufficientCorrespondences" in capsys.readouterr().err

    def test_matrix_route(self, tmp_path, solve_fixture):
        # one-hot matrix reproduces the direct correspondence solve
        scene, corr, intr, stats = solve_fixture
        n = len(scene.model)
        model_path = tmp_path / "model.json"
        fileio.save_nocs_model(scene.model, str(model_path), category="laptop")
        matrix_path = tmp_path / "c.json"
        triplets = [[i, i, 1.0] for i in range(n)]
        fileio.dump_json({"rows": n, "cols": n, "triplets": triplets}, str(matrix_path))
        out = tmp_path / "pose_matrix.json"
        rc = main(
            [
                "solve",
                "--correspondences", str(corr),
                "--intrinsics", str(intr),
                "--stats", str(stats),
                "--category", "laptop",
                "--model", str(model_path),
                "--matrix", str(matrix_path),
                "--output", str(out),
            ]
        )
        assert rc == 0
        payload = json.loads(out.read_text())
        rot = np.asarray(payload["pose"]["rotation"]).reshape(3, 3)
        assert rotation_error_deg(rot, scene.pose.rotation) < 1e-6

    def test_idempotent_output(self, tmp_path, solve_fixture):
        scene, corr, intr, stats = solve_fixture
        args = [
            "solve",
            "--correspondences", str(corr),
            "--intrinsics", str(intr),
            "--scale", f"{scene.scale!r}",
            "--output", str(tmp_path / "a.json"),
        ]
        assert main(args) == 0
        first = (tmp_path / "a.json").read_bytes()
        assert main(args) == 0
        assert (tmp_path / "a.json").read_bytes() == first

    def test_usage_error_exits_one(self, capsys):
        assert main(["solve", "--no-such-flag"]) == 1

    def test_non_finite_values_exit_one(self, tmp_path, solve_fixture, capsys):
        _, _, intr, _ = solve_fixture
        bad = tmp_path / "nan.json"
        bad.write_text(
            json.dumps(
                [{"image": [float("nan"), 1.0], "model": [0.0, 0.0, 0.0]}] * 4
            )
        )
        rc = main(
            [
                "solve",
                "--correspondences", str(bad),
                "--intrinsics", str(intr),
                "--scale", "1.0",
                "--output", str(tmp_path / "o.json"),
            ]
        )
        assert rc == 1
        assert "non-finite" in capsys.readouterr().err


class TestEvaluate:
    @pytest.fixture
    def records(self, tmp_path):
        grid = run_grid(["mug", "can"], [NoiseSpec()], trials=2, master_seed=7)
        detections, gts = grid.to_records("decoupled")
        pred = tmp_path / "pred.jsonl"
        gt = tmp_path / "gt.jsonl"
        pred.write_text(fileio.detections_jsonl(detections))
        gt.write_text(fileio.ground_truths_jsonl(gts))
        return pred, gt

    def test_perfect_predictions_all_hundred(self, tmp_path, records, capsys):
        pred, gt = records
        out = tmp_path / "report"
        rc = main(
            ["evaluate", "--predictions", str(pred), "--ground-truth", str(gt), "--output-dir", str(out)]
        )
        assert rc == 0
        text = (out / "metrics.txt").read_text()
        assert "100.0" in text
        assert "rotation error: symmetry-aware" in text
        header = (out / "metrics.csv").read_text().splitlines()[0]
        assert header == "category,IoU50,IoU75,10cm,10°,10°10cm"
        for metric in ("iou", "rotation_deg", "translation_cm"):
            assert (out / f"curve_{metric}.csv").exists()

    def test_symmetry_off_labeled(self, tmp_path, records):
        pred, gt = records
        out = tmp_path / "raw"
        rc = main(
            [
                "evaluate",
                "--predictions", str(pred),
                "--ground-truth", str(gt),
                "--output-dir", str(out),
                "--symmetry", "off",
            ]
        )
        assert rc == 0
        assert "raw geodesic" in (out / "metrics.txt").read_text()

    def test_schema_error_reports_line(self, tmp_path, records, capsys):
        pred, gt = records
        bad = tmp_path / "bad.jsonl"
        lines = pred.read_text().splitlines()
        lines[1] = '{"category": "mug"}'
        bad.write_text("\n".join(lines) + "\n")
        rc = main(
            ["evaluate", "--predictions", str(bad), "--ground-truth", str(gt), "--output-dir", str(tmp_path / "r")]
        )
        assert rc == 1
        assert ":2" in capsys.readouterr().err

    def test_unmatched_category_warns(self, tmp_path, records, capsys):
        pred, gt = records
        extra = tmp_path / "extra.jsonl"
        line = json.dumps(
            {
                "category": "teapot",
                "confidence": 1.0,
                "pose": {"rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1], "translation": [0, 0, 1]},
                "scale": 0.2,
                "canonical_extents": [0.6, 0.6, 0.52915026221291805],
            }
        )
        extra.write_text(pred.read_text() + line + "\n")
        rc = main(
            ["evaluate", "--predictions", str(extra), "--ground-truth", str(gt), "--output-dir", str(tmp_path / "r2")]
        )
        assert rc == 0
        err = capsys.readouterr().err
        assert "teapot" in err and "omitted" in err

    def test_idempotent_reports(self, tmp_path, records):
        pred, gt = records
        out = tmp_path / "rep"
        args = ["evaluate", "--predictions", str(pred), "--ground-truth", str(gt), "--output-dir", str(out)]
        assert main(args) == 0
        blobs = {p.name: p.read_bytes() for p in out.iterdir()}
        assert main(args) == 0
        assert {p.name: p.read_bytes() for p in out.iterdir()} == blobs


class TestSimulate:
    def test_deterministic_and_summary(self, tmp_path, capsys):
        args = [
            "simulate",
            "--categories", "mug",
            "--trials", "2",
            "--depth-noise", "0,0.05",
            "--seed", "0",
            "--output", str(tmp_path / "exp.csv"),
        ]
        assert main(args) == 0
        out = capsys.readouterr().out
        assert "decoupled" in out and "coupled" in out
        first = (tmp_path / "exp.csv").read_bytes()
        first_summary = (tmp_path / "exp_summary.csv").read_bytes()
        assert main(args) == 0
        assert (tmp_path / "exp.csv").read_bytes() == first
        assert (tmp_path / "exp_summary.csv").read_bytes() == first_summary

    def test_zero_trials_exits_one(self, tmp_path):
        rc = main(
            ["simulate", "--trials", "0", "--output", str(tmp_path / "x.csv")]
        )
        assert rc == 1

    def test_unknown_category_exits_one(self, tmp_path, capsys):
        rc = main(
            ["simulate", "--categories", "spoon", "--trials", "1", "--output", str(tmp_path / "x.csv")]
        )
        assert rc == 1
        assert "spoon" in capsys.readouterr().err

    def test_config_file_overrides(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "categories": ["can"],
                    "trials": 1,
                    "depth_noise": [0.0],
                    "output": str(tmp_path / "from_config.csv"),
                }
            )
        )
        rc = main(["simulate", "--config", str(cfg)])
        assert rc == 0
        content = (tmp_path / "from_config.csv").read_text()
        assert "can,decoupled" in content

    def test_unknown_config_key_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"speed": "fast"}))
        assert main(["simulate", "--config", str(cfg)]) == 1
        assert "speed" in capsys.readouterr().err

    def test_env_var_default_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SCALEPOSE_OUT_DIR", str(tmp_path / "envout"))
        rc = main(["simulate", "--categories", "mug", "--trials", "1", "--depth-noise", "0"])
        assert rc == 0
        assert (tmp_path / "envout" / "experiment.csv").exists()
        assert (tmp_path / "envout" / "experiment_summary.csv").exists()


class TestStats:
    def test_two_value_example(self, tmp_path):
        scales = tmp_path / "scales.jsonl"
        scales.write_text('{"category": "mug", "scale": 1.0}\n{"category": "mug", "scale": 3.0}\n')
        out = tmp_path / "stats.json"
        rc = main(["stats", "--input", str(scales), "--output", str(out)])
        assert rc == 0
        data = json.loads(out.read_text())
        assert data == [{"category": "mug", "mean_scale": 2.0, "std_dev": 1.0, "count": 2}]

    def test_categories_sorted(self, tmp_path):
        scales = tmp_path / "scales.jsonl"
        scales.write_text(
            '{"category": "mug", "scale": 1.0}\n'
            '{"category": "bottle", "scale": 0.3}\n'
            '{"category": "mug", "scale": 1.2}\n'
        )
        out = tmp_path / "stats.json"
        csv = tmp_path / "sigma.csv"
        rc = main(["stats", "--input", str(scales), "--output", str(out), "--csv", str(csv)])
        assert rc == 0
        data = json.loads(out.read_text())
        assert [d["category"] for d in data] == ["bottle", "mug"]
        lines = csv.read_text().splitlines()
        assert lines[0] == "category,std_dev"
        assert lines[1].startswith("bottle,")

    def test_matches_compute_stats_oracle(self, tmp_path):
        from scalepose.scale import compute_stats
        from scalepose.synth import CATEGORIES

        rng = np.random.default_rng(8)
        rows = []
        expected = {}
        for cat in CATEGORIES:
            values = rng.uniform(0.05, 0.6, size=rng.integers(3, 12)).tolist()
            expected[cat] = compute_stats(cat, values)
            rows += [json.dumps({"category": cat, "scale": v}) for v in values]
        scales = tmp_path / "scales.jsonl"
        scales.write_text("\n".join(rows) + "\n")
        out = tmp_path / "stats.json"
        assert main(["stats", "--input", str(scales), "--output", str(out)]) == 0
        loaded = fileio.load_stats(str(out))
        for cat, stats in expected.items():
            assert loaded[cat] == stats

    def test_non_positive_scale_reports_line(self, tmp_path, capsys):
        scales = tmp_path / "scales.jsonl"
        scales.write_text('{"category": "mug", "scale": 1.0}\n{"category": "mug", "scale": -2.0}\n')
        rc = main(["stats", "--input", str(scales), "--output", str(tmp_path / "o.json")])
        assert rc == 1
        assert ":2" in capsys.readouterr().err

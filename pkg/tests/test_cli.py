"""End-to-end CLI workflows on a tiny synthetic camera site."""

import json
from datetime import datetime, timedelta

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from camcast import evaluation as ev
from camcast.cli import main
from camcast.descriptors import format_utc, format_utc_compact, write_nwp_csv
from conftest import UTC, make_record
from test_evaluation import fake_generate, make_candidates

T0 = datetime(2019, 6, 1, 10, 0, tzinfo=UTC)
SITE = "tinycam"


@pytest.fixture(scope="module")
def site(tmp_path_factory):
    """Synthetic archive: 19 frames at 10-min cadence plus NWP coverage."""
    root = tmp_path_factory.mktemp("site")
    images = root / "images"
    images.mkdir()
    rng = np.random.default_rng(0)
    for i in range(19):
        ts = T0 + timedelta(minutes=10 * i)
        array = rng.integers(0, 256, size=(8, 16, 3), dtype=np.uint8)
        Image.fromarray(array).save(images / f"{SITE}_{format_utc_compact(ts)}.png")
    records = [
        make_record(T0.replace(hour=0) + timedelta(hours=h), fill=float(h) * 3.0)
        for h in range(24)
    ]
    nwp = root / "nwp.csv"
    write_nwp_csv(nwp, [r.__class__(r.timestamp, SITE, r.values) for r in records])
    return {"root": root, "images": images, "nwp": nwp}


@pytest.fixture(scope="module")
def trained(site, tmp_path_factory):
    """Normalizer + tiny trained checkpoint shared by downstream CLI tests."""
    runner = CliRunner()
    out = tmp_path_factory.mktemp("pipeline")
    normalizer = out / "normalizer.json"
    result = runner.invoke(main, [
        "fit-normalizer", "--nwp", str(site["nwp"]), "--site", SITE,
        "--out", str(normalizer), "--dataset-id", "tinycam-2019",
    ])
    assert result.exit_code == 0, result.output

    dataset = out / "dataset"
    result = runner.invoke(main, [
        "build-dataset", "--images", str(site["images"]), "--site", SITE,
        "--nwp", str(site["nwp"]), "--out", str(dataset),
        "--train-years", "2019", "--test-years", "2020", "--max-lead", "30",
    ])
    assert result.exit_code == 0, result.output

    run_dir = out / "run"
    result = runner.invoke(main, [
        "train", "--manifest", str(dataset / "train.csv"),
        "--images", str(site["images"]), "--site", SITE,
        "--nwp", str(site["nwp"]), "--normalizer", str(normalizer),
        "--out", str(run_dir), "--mode", "l1-baseline", "--steps", "2",
        "--batch-size", "2", "--stages", "1", "--base-channels", "8",
        "--height", "4", "--width", "8",
    ])
    assert result.exit_code == 0, result.output
    return {
        "normalizer": normalizer,
        "dataset": dataset,
        "checkpoint": run_dir / "checkpoint_final.pt",
        "run_dir": run_dir,
    }


class TestHelp:
    @pytest.mark.parametrize("command", [
        [], ["build-dataset"], ["fit-normalizer"], ["train"], ["nowcast"],
        ["analog"], ["eval-sample"], ["eval-serve"], ["eval-report"], ["selftest"],
    ])
    def test_help_exits_zero(self, command):
        result = CliRunner().invoke(main, command + ["--help"])
        assert result.exit_code == 0
        assert "Usage" in result.output

    def test_unknown_flag_exits_two(self):
        result = CliRunner().invoke(main, ["nowcast", "--definitely-not-a-flag"])
        assert result.exit_code == 2


class TestBuildDataset:
    def test_report_written(self, site, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, [
            "build-dataset", "--images", str(site["images"]), "--site", SITE,
            "--nwp", str(site["nwp"]), "--out", str(tmp_path),
            "--max-lead", "20",
        ])
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "dataset_report.json").read_text())
        assert report["frames"] == 19
        # 19 frames, leads {0, 10, 20}: 19 + 18 + 17 pairs
        assert report["pairs_total"] == 54
        assert report["pairs_train"] == 54
        assert (tmp_path / "train.csv").exists()
        assert (tmp_path / "test.csv").exists()


class TestTrainOutputs:
    def test_run_artifacts(self, trained):
        assert trained["checkpoint"].exists()
        manifest = json.loads((trained["run_dir"] / "run_manifest.json").read_text())
        assert manifest["mode"] == "l1_baseline"
        assert (trained["run_dir"] / "metrics.csv").exists()

    def test_adversarial_smoke(self, site, trained, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, [
            "train", "--manifest", str(trained["dataset"] / "train.csv"),
            "--images", str(site["images"]), "--site", SITE,
            "--nwp", str(site["nwp"]), "--normalizer", str(trained["normalizer"]),
            "--out", str(tmp_path), "--mode", "adversarial", "--steps", "2",
            "--batch-size", "2", "--stages", "1", "--base-channels", "8",
            "--height", "4", "--width", "8",
        ])
        assert result.exit_code == 0, result.output
        header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
        assert header.startswith("step,real_patch,fake_patch,cutmix_pixel,fooling,diversity")

    def test_training_config_file_drives_run(self, site, trained, tmp_path):
        from camcast import training as train_mod
        from camcast.models import DiscriminatorConfig, GeneratorConfig

        config_path = tmp_path / "training.json"
        train_mod.write_training_config(
            config_path,
            GeneratorConfig(stages=1, base_channels=8, latent_dim=4,
                            latent_channels=8, input_h=4, input_w=8),
            DiscriminatorConfig(stages=1, base_channels=8, input_h=4, input_w=8),
            train_mod.OptimizerSettings(lr_g=2e-4, batch_size=2, steps=1),
        )
        run_dir = tmp_path / "run"
        result = CliRunner().invoke(main, [
            "train", "--manifest", str(trained["dataset"] / "train.csv"),
            "--images", str(site["images"]), "--site", SITE,
            "--nwp", str(site["nwp"]), "--normalizer", str(trained["normalizer"]),
            "--out", str(run_dir), "--config", str(config_path),
        ])
        assert result.exit_code == 0, result.output
        manifest = json.loads((run_dir / "run_manifest.json").read_text())
        assert manifest["lr_g"] == 2e-4
        assert manifest["steps"] == 1
        assert manifest["generator_config"]["input_h"] == 4


class TestNowcast:
    def test_byte_identical_reruns(self, site, trained, tmp_path):
        runner = CliRunner()
        frame = site["images"] / f"{SITE}_{format_utc_compact(T0)}.png"
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            result = runner.invoke(main, [
                "nowcast", "--checkpoint", str(trained["checkpoint"]),
                "--image", str(frame), "--nwp", str(site["nwp"]), "--site", SITE,
                "--t0", format_utc(T0), "--normalizer", str(trained["normalizer"]),
                "--out", str(out), "--leads", "0,60,120", "--sigma", "0.5",
                "--seed", "7",
            ])
            assert result.exit_code == 0, result.output
            outputs.append(sorted(p for p in out.iterdir() if p.suffix == ".png"))
        assert [p.name for p in outputs[0]] == [p.name for p in outputs[1]]
        for left, right in zip(outputs[0], outputs[1]):
            assert left.read_bytes() == right.read_bytes()

    def test_mismatched_normalizer_fails(self, site, trained, tmp_path):
        runner = CliRunner()
        other = tmp_path / "other.json"
        result = runner.invoke(main, [
            "fit-normalizer", "--nwp", str(site["nwp"]), "--site", SITE,
            "--out", str(other), "--dataset-id", "different",
        ])
        assert result.exit_code == 0
        frame = site["images"] / f"{SITE}_{format_utc_compact(T0)}.png"
        result = runner.invoke(main, [
            "nowcast", "--checkpoint", str(trained["checkpoint"]),
            "--image", str(frame), "--nwp", str(site["nwp"]), "--site", SITE,
            "--t0", format_utc(T0), "--normalizer", str(other),
            "--out", str(tmp_path / "x"), "--leads", "0",
        ])
        assert result.exit_code == 1
        assert "normalizer" in result.output.lower()


class TestAnalog:
    def test_individual_and_sequence(self, site, trained, tmp_path):
        runner = CliRunner()
        for mode, cadence in (("individual", "60"), ("sequence", "10")):
            result = runner.invoke(main, [
                "analog", "--mode", mode, "--images", str(site["images"]),
                "--site", SITE, "--nwp", str(site["nwp"]),
                "--normalizer", str(trained["normalizer"]),
                "--query-nwp", str(site["nwp"]), "--t0", format_utc(T0),
                "--leads", "0,10,20", "--cadence", cadence,
            ])
            assert result.exit_code == 0, result.output
            assert result.output.count(".png") == 3


class TestEvalReport:
    def test_confusion_fixture_accuracy(self, tmp_path):
        items = ev.sample_realism_set(make_candidates(), fake_generate, n_pairs=75, seed=0)
        ev.write_items(items, tmp_path)
        from test_evaluation import panel_judgments

        judgments = panel_judgments(items, error_real=18, error_generated=43)
        for record in judgments:
            ev.append_judgment(tmp_path / "judgments.jsonl", record)
        result = CliRunner().invoke(main, [
            "eval-report", "--judgments", str(tmp_path / "judgments.jsonl"),
            "--truth", str(tmp_path / ev.TRUTH_FILE_NAME),
        ])
        assert result.exit_code == 0, result.output
        assert "59.33%" in result.output

    def test_checklist_report(self, tmp_path):
        from test_evaluation import audit_fixture

        ev.write_checklists_csv(audit_fixture(), tmp_path / "checklists.csv")
        result = CliRunner().invoke(main, [
            "eval-report", "--checklists", str(tmp_path / "checklists.csv"),
        ])
        assert result.exit_code == 0, result.output
        assert "32/45" in result.output
        assert "failures: 5" in result.output

    def test_requires_an_input(self):
        assert CliRunner().invoke(main, ["eval-report"]).exit_code == 1


class TestEvalSample:
    def test_materializes_study(self, site, trained, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, [
            "eval-sample", "--manifest", str(trained["dataset"] / "train.csv"),
            "--images", str(site["images"]), "--site", SITE,
            "--nwp", str(site["nwp"]), "--normalizer", str(trained["normalizer"]),
            "--checkpoint", str(trained["checkpoint"]), "--out", str(tmp_path),
            "--n-pairs", "4", "--seed", "3", "--examiners", "alice,bob",
            "--per-examiner", "3",
        ])
        assert result.exit_code == 0, result.output
        manifest = ev.read_items_manifest(tmp_path / "manifest.json")
        assert len(manifest) == 8
        truth = ev.read_truth(tmp_path / ev.TRUTH_FILE_NAME)
        assert sorted(truth) == sorted(e["item_id"] for e in manifest)
        assignments = ev.read_assignments(tmp_path / ev.ASSIGNMENTS_FILE_NAME)
        assert set(assignments) == {"alice", "bob"}


class TestSelftest:
    def test_exits_zero(self):
        result = CliRunner().invoke(main, ["selftest"])
        assert result.exit_code == 0, result.output
        assert "all" in result.output and "passed" in result.output

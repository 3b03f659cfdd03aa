import json
import subprocess
import sys

import numpy as np
import pytest

from kernsat.cli import main, read_runs_csv
from kernsat.data import LabeledDataset, load_mnist, write_idx
from kernsat.harness import (ExperimentConfig, ResultRow, ResultsFormatError, ResultsTable,
                             load_results, persist_results, run_experiment)

TINY = "rescnn:in=1,stem=4x3,blocks=4,classes=2"
TRAIN_ARGS = ["train", "--dataset", "blobs", "--epochs", "2", "--runs", "2", "--arch", TINY,
              "--batch-size", "32", "--lr", "0.01"]


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.lr, cfg.batch_size, cfg.split, cfg.seed) == (0.001, 128, 0.8, 0)
        assert cfg.mode == ("Standard", "Supplemented")

    def test_desk_preset(self):
        cfg = ExperimentConfig.from_dict({"dataset": "cifar10"}, "desk")
        assert cfg.epochs == 15 and cfg.runs == 3 and cfg.train_subset == 5000
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"epochs": 31}, "desk")

    def test_full_preset(self):
        cfg = ExperimentConfig.from_dict({"dataset": "stl10"}, "full")
        assert cfg.epochs == 500
        assert cfg.runs_for("NegativesOnly") == 1 and cfg.runs_for("Standard") == 3

    @pytest.mark.parametrize("bad", [{"epochs": 0}, {"runs": 0}, {"split": 1.0}, {"dataset": "imagenet"},
                                     {"mode": ["flip"]}, {"colour": 1}, {"arch": "vgg"}])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict(bad)

    def test_identity(self):
        a = ExperimentConfig(out_dir="x")
        assert a.identity() == ExperimentConfig(out_dir="y", data_dir="/d").identity()
        assert a.identity() != ExperimentConfig(seed=1).identity()

    def test_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"dataset": "blobs", "epochs": 4}))
        cfg = ExperimentConfig.from_json(p, {"epochs": 2})
        assert cfg.dataset == "blobs" and cfg.epochs == 2


class TestResults:
    def test_round_trip(self, tmp_path):
        t = ResultsTable([ResultRow("a", "cifar10", "Standard", 0, 80.123456789012),
                          ResultRow("a", "cifar10", "Supplemented", 0, 81.0)])
        persist_results(t, tmp_path / "r.csv")
        assert load_results(tmp_path / "r.csv") == t

    def test_empty(self, tmp_path):
        persist_results(ResultsTable(), tmp_path / "r.csv")
        assert load_results(tmp_path / "r.csv").rows == []

    def test_line_numbers(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("arch,dataset,mode,run,accuracy\na,b,Standard,0,50\na,b,Standard,x,50\n")
        with pytest.raises(ResultsFormatError, match="line 3"):
            load_results(p)
        p.write_text("arch,dataset\n")
        with pytest.raises(ResultsFormatError, match="line 1"):
            load_results(p)

    def test_accuracy_range(self):
        with pytest.raises(ValueError):
            ResultRow("a", "b", "Standard", 0, -1.0)


class TestRunner:
    def test_artifacts(self, tmp_path):
        cfg = ExperimentConfig(dataset="blobs", epochs=2, runs=1, arch=TINY, batch_size=32,
                               out_dir=str(tmp_path), mode=("Standard", "Supplemented", "NegativesOnly"))
        table = run_experiment(cfg)
        assert [r.mode for r in table.rows] == ["Standard", "Supplemented", "NegativesOnly"]
        root = tmp_path / cfg.identity()
        for name in ("config.json", "results.csv", "metrics.json", "deltas.csv"):
            assert (root / name).is_file()
        run = root / "Supplemented" / "run0"
        for name in ("checkpoint.bin", "history.csv", "saturation.csv", "snapshots/manifest.json",
                     "figures/activation_original.pgm", "figures/activation_negative.pgm"):
            assert (run / name).is_file(), name
        metrics = json.loads((root / "metrics.json").read_text())
        assert metrics["Supplemented"]["num_images"] == 2 * metrics["Standard"]["num_images"]

    def test_rejects_negated_test_set(self, tmp_path):
        ds = LabeledDataset(np.zeros((4, 1, 8, 8), np.uint8), [0, 1, 0, 1], 2, negative=[True] * 4)
        cfg = ExperimentConfig(dataset="blobs", epochs=1, runs=1, arch=TINY, out_dir=str(tmp_path))
        with pytest.raises(ValueError):
            run_experiment(cfg, (ds, ds))


class TestCli:
    def test_help(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for cmd in ("analyze", "augment", "train", "stats", "visualize"):
            assert cmd in text
            with pytest.raises(SystemExit) as exc:
                main([cmd, "--help"])
            assert exc.value.code == 0

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["fly"])
        assert exc.value.code != 0

    def test_module_entry(self):
        r = subprocess.run([sys.executable, "-m", "kernsat", "--help"], capture_output=True, text=True)
        assert r.returncode == 0 and "analyze" in r.stdout

    def test_analyze(self, capsys):
        assert main(["analyze", "--dataset", "blobs", "--pooling", "both"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert [r["pooling"] for r in out] == ["per-image", "global"]
        assert 0 <= out[0]["me_bits"] <= 8

    def test_analyze_missing_data(self, capsys, monkeypatch, tmp_path):
        monkeypatch.setenv("KERNSAT_DATA_DIR", str(tmp_path))
        assert main(["analyze", "--dataset", "mnist"]) == 1
        assert "error" in capsys.readouterr().err

    def test_augment_round_trip(self, tmp_path, capsys):
        src = tmp_path / "src" / "mnist"
        src.mkdir(parents=True)
        rng = np.random.default_rng(0)
        ds = LabeledDataset(rng.integers(0, 256, (6, 1, 28, 28), dtype=np.uint8), rng.integers(0, 10, 6))
        write_idx(ds, src / "train-images-idx3-ubyte", src / "train-labels-idx1-ubyte")
        out = tmp_path / "out"
        assert main(["augment", "--dataset", "mnist", "--data-dir", str(tmp_path / "src"),
                     "--mode", "NegativesOnly", "--out", str(out)]) == 0
        neg = load_mnist(out / "mnist" / "train-images-idx3-ubyte", out / "mnist" / "train-labels-idx1-ubyte")
        assert np.array_equal(neg.images, 255 - ds.images)
        assert np.array_equal(neg.labels, ds.labels)
        capsys.readouterr()
        assert main(["analyze", "--dataset", "mnist", "--data-dir", str(out)]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["num_images"] == 6

    def test_stats(self, tmp_path, capsys):
        p = tmp_path / "runs.csv"
        p.write_text("condition,run,accuracy\nA,0,80.1\nA,1,80.6\nA,2,79.9\nB,0,81.0\nB,1,81.2\nB,2,80.7\n")
        assert main(["stats", "--csv", str(p), "--pair", "A", "B", "--out", str(tmp_path / "s.json")]) == 0
        doc = json.loads((tmp_path / "s.json").read_text())
        tests = {t["test"]: t for t in doc["tests"] if "pair" in t}
        assert "paired-t (two-tailed)" in tests
        assert len([t for t in doc["tests"] if t.get("test") == "shapiro-wilk"]) == 2
        assert main(["stats", "--csv", str(p), "--pair", "A", "Z"]) == 1

    def test_stats_bad_csv(self, tmp_path):
        p = tmp_path / "runs.csv"
        p.write_text("condition,run,accuracy\nA,zero,1\n")
        with pytest.raises(ValueError, match="line 2"):
            read_runs_csv(p)

    def test_train_stats_visualize(self, tmp_path, capsys):
        out = tmp_path / "runs"
        assert main(TRAIN_ARGS + ["--out", str(out)]) == 0
        root = next(out.iterdir())
        assert main(["stats", "--csv", str(root / "results.csv")]) == 0
        assert "blobs/Standard" in capsys.readouterr().out
        snap = root / "Standard" / "run0" / "snapshots" / "epoch0000.bin"
        assert main(["visualize", "--snapshot", str(snap), "--out", str(tmp_path / "k.pgm")]) == 0
        assert (tmp_path / "k.pgm").read_bytes().startswith(b"P5\n")
        assert main(["visualize", "--checkpoint", str(root / "Standard" / "run0" / "checkpoint.bin"),
                     "--dataset", "blobs", "--split", "test", "--negate", "--layer", "stem",
                     "--out", str(tmp_path / "a.pgm")]) == 0
        assert main(["visualize", "--snapshot", str(snap), "--layer", "nope",
                     "--out", str(tmp_path / "x.pgm")]) == 1


def test_cli_runs_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(TRAIN_ARGS + ["--out", str(tmp_path / name)]) == 0
    (ra,), (rb,) = list((tmp_path / "a").iterdir()), list((tmp_path / "b").iterdir())
    files = sorted(p.relative_to(ra) for p in ra.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(rb) for p in rb.rglob("*") if p.is_file())
    for f in files:
        assert (ra / f).read_bytes() == (rb / f).read_bytes(), f


def test_cifar_layout_end_to_end(tmp_path, monkeypatch):
    from kernsat.data import CIFAR_FILES, write_cifar10
    d = tmp_path / "data" / "cifar-10-batches-bin"
    d.mkdir(parents=True)
    rng = np.random.default_rng(0)
    for split_name, files in CIFAR_FILES.items():
        for fname in files:
            ds = LabeledDataset(rng.integers(0, 256, (20, 3, 32, 32), dtype=np.uint8), rng.integers(0, 10, 20))
            write_cifar10(ds, d / fname)
    monkeypatch.setenv("KERNSAT_DATA_DIR", str(tmp_path / "data"))
    cfg = ExperimentConfig.from_dict({"dataset": "cifar10", "epochs": 1, "runs": 1, "train_subset": 60,
                                      "test_subset": 15, "out_dir": str(tmp_path / "runs")}, "desk")
    table = run_experiment(cfg)
    assert len(table.rows) == 2
    root = tmp_path / "runs" / cfg.identity()
    assert (root / "Standard" / "run0" / "snapshots" / "epoch0000_stem.ppm").is_file()

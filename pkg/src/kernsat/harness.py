"""Experiment configuration, runner and results persistence."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import infometrics
from .augment import AugmentationMode, build_training_set, negate_image
from .data import DATASETS, LabeledDataset, SplitSpec, load_dataset, split
from .engine import Architecture, Network, TrainConfig, evaluate, train
from .engine.checkpoint import save_checkpoint
from .saturation import DEFAULT_EPS, SaturationTracker, capture_activation_maps
from .synthetic import make_blobs

log = logging.getLogger(__name__)

RESULTS_HEADER = ["arch", "dataset", "mode", "run", "accuracy"]
ALL_DATASETS = DATASETS + ("blobs",)

PRESETS = {
    "desk": {
        "epochs": 15,
        "runs": 3,
        "train_subset": {"mnist": 5000, "cifar10": 5000, "stl10": 1000},
        "test_subset": {"stl10": 2000},
    },
    "full": {
        "epochs": 500,
        "runs": 3,
        "runs_per_mode": {"NegativesOnly": 1},
        "mode": ["Standard", "Supplemented", "NegativesOnly"],
    },
}
DESK_MAX_EPOCHS = 30

# fields that do not change what is computed
_NON_IDENTITY = {"out_dir", "data_dir", "preset"}


@dataclass
class ExperimentConfig:
    dataset: str = "cifar10"
    mode: tuple = ("Standard", "Supplemented")
    epochs: int = 15
    runs: int = 3
    seed: int = 0
    lr: float = 0.001
    batch_size: int = 128
    split: float = 0.8
    arch: str | None = None
    eps: float = DEFAULT_EPS
    out_dir: str = "runs"
    data_dir: str | None = None
    train_subset: int | None = None
    test_subset: int | None = None
    runs_per_mode: dict = field(default_factory=dict)
    track_test_per_epoch: bool = False
    preset: str | None = None

    def __post_init__(self):
        if isinstance(self.mode, (str, AugmentationMode)):
            self.mode = (self.mode,)
        self.mode = tuple(AugmentationMode.parse(m).value for m in self.mode)
        if not self.mode:
            raise ValueError("at least one augmentation mode is required")
        if self.dataset not in ALL_DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}; expected one of {ALL_DATASETS}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        SplitSpec(self.split, self.seed)
        self.runs_per_mode = {AugmentationMode.parse(k).value: int(v) for k, v in self.runs_per_mode.items()}
        if self.preset == "desk" and self.epochs > DESK_MAX_EPOCHS:
            raise ValueError(f"desk preset caps epochs at {DESK_MAX_EPOCHS}")
        if self.arch is not None:
            Architecture.parse(self.arch)

    @classmethod
    def from_dict(cls, values: dict, preset: str | None = None) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged = {}
        preset = preset or values.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise ValueError(f"unknown preset {preset!r}")
            dataset = values.get("dataset", cls.dataset)
            for k, v in PRESETS[preset].items():
                merged[k] = v.get(dataset) if k in ("train_subset", "test_subset") else v
            merged["preset"] = preset
        merged.update(values)
        return cls(**merged)

    @classmethod
    def from_json(cls, path, overrides: dict | None = None, preset: str | None = None) -> "ExperimentConfig":
        values = json.loads(Path(path).read_text())
        values.update(overrides or {})
        return cls.from_dict(values, preset)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mode"] = list(self.mode)
        return d

    def identity(self) -> str:
        """Stable hash of every field that affects results."""
        d = {k: v for k, v in self.to_dict().items() if k not in _NON_IDENTITY}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]

    def runs_for(self, mode: str) -> int:
        return self.runs_per_mode.get(mode, self.runs)

    def architecture(self, in_channels: int, num_classes: int) -> Architecture:
        if self.arch is not None:
            return Architecture.parse(self.arch)
        return Architecture(in_channels=in_channels, num_classes=num_classes)


@dataclass(frozen=True)
class ResultRow:
    arch: str
    dataset: str
    mode: str
    run: int
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 100.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 100]")


@dataclass
class ResultsTable:
    rows: list[ResultRow] = field(default_factory=list)

    def means(self) -> dict[tuple[str, str, str], float]:
        groups: dict[tuple[str, str, str], list[float]] = {}
        for r in self.rows:
            groups.setdefault((r.arch, r.dataset, r.mode), []).append(r.accuracy)
        return {k: float(np.mean(v)) for k, v in groups.items()}

    def accuracies(self, mode: str) -> dict[int, float]:
        return {r.run: r.accuracy for r in self.rows if r.mode == mode}

    def format(self) -> str:
        lines = [f"{'dataset':<8} {'mode':<14} {'run':>3} {'accuracy':>9}"]
        for r in self.rows:
            lines.append(f"{r.dataset:<8} {r.mode:<14} {r.run:>3} {r.accuracy:>8.2f}%")
        for (arch, ds, mode), m in self.means().items():
            lines.append(f"{ds:<8} {mode:<14} {'avg':>3} {m:>8.2f}%")
        return "\n".join(lines)


class ResultsFormatError(ValueError):
    pass


def persist_results(table: ResultsTable, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in table.rows:
            w.writerow([r.arch, r.dataset, r.mode, r.run, repr(float(r.accuracy))])


def load_results(path) -> ResultsTable:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise ResultsFormatError(f"line 1: expected header {','.join(RESULTS_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(RESULTS_HEADER):
                raise ResultsFormatError(f"line {lineno}: expected 5 fields, got {len(rec)}")
            arch, dataset, mode, run, acc = rec
            try:
                rows.append(ResultRow(arch, dataset, mode, int(run), float(acc)))
            except ValueError as exc:
                raise ResultsFormatError(f"line {lineno}: {exc}") from None
    return ResultsTable(rows)


# --------------------------------------------------------------------------- runner


def load_experiment_data(config: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    if config.dataset == "blobs":
        return make_blobs(400, seed=1000), make_blobs(200, seed=2000)
    train_set = load_dataset(config.dataset, "train", config.data_dir)
    test_set = load_dataset(config.dataset, "test", config.data_dir)
    return train_set, test_set


def _subsample(ds: LabeledDataset, n: int | None, seed: int) -> LabeledDataset:
    if n is None or n >= len(ds):
        return ds
    idx = np.sort(np.random.default_rng(seed).permutation(len(ds))[:n])
    return ds.subset(idx)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def run_experiment(config: ExperimentConfig, data=None) -> ResultsTable:
    """Train every (mode, run) pair and evaluate on the unmodified test set.

    ``data`` optionally supplies ``(train, test)`` datasets instead of loading
    ``config.dataset``. Artifacts land in ``out_dir/<config hash>/``.
    """
    train_full, test_set = data if data is not None else load_experiment_data(config)
    train_full = _subsample(train_full, config.train_subset, config.seed)
    test_set = _subsample(test_set, config.test_subset, config.seed + 1)
    if test_set.negative.any():
        raise ValueError("test set must contain only original images")
    root = Path(config.out_dir) / config.identity()
    root.mkdir(parents=True, exist_ok=True)
    # location fields are left out so identical experiments produce identical bytes
    stored = {k: v for k, v in config.to_dict().items() if k not in ("out_dir", "data_dir")}
    (root / "config.json").write_text(json.dumps(stored, indent=2, sort_keys=True) + "\n")
    arch = config.architecture(train_full.image_shape[0], train_full.num_classes)

    table = ResultsTable()
    metrics = {}
    for mode in config.mode:
        for run in range(config.runs_for(mode)):
            sub_seed = config.seed + run
            train_part, val_part = split(train_full, SplitSpec(config.split, sub_seed))
            train_set = build_training_set(train_part, mode)
            val_set = build_training_set(val_part, mode)
            if run == 0:
                report = infometrics.metrics_report(train_set)
                metrics[mode] = report.to_dict()
            acc = _run_one(config, arch, mode, run, sub_seed, train_set, val_set, test_set, root)
            table.rows.append(ResultRow(arch.descriptor, config.dataset, mode, run, acc))
            log.info("%s %s run %d: %.2f%%", config.dataset, mode, run, acc)

    persist_results(table, root / "results.csv")
    (root / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    _write_deltas(table, root / "deltas.csv")
    return table


def _write_deltas(table: ResultsTable, path: Path) -> None:
    std = table.accuracies(AugmentationMode.STANDARD.value)
    sup = table.accuracies(AugmentationMode.SUPPLEMENTED.value)
    rows = [[run, _fmt(std[run]), _fmt(sup[run]), _fmt(sup[run] - std[run])]
            for run in sorted(set(std) & set(sup))]
    if rows:
        _write_csv(path, ["run", "standard", "supplemented", "delta"], rows)


def _run_one(config, arch, mode, run, sub_seed, train_set, val_set, test_set, root) -> float:
    run_dir = root / mode / f"run{run}"
    run_dir.mkdir(parents=True, exist_ok=True)
    net = Network(arch, seed=sub_seed)
    tracker = SaturationTracker(run_dir / "snapshots", eps=config.eps, seed=sub_seed)
    test_curve = []

    def on_epoch(epoch, network, record):
        tracker(epoch, network, record)
        if config.track_test_per_epoch and epoch > 0:
            test_curve.append(evaluate(network, test_set))

    records, net = train(net, train_set, val_set,
                         TrainConfig(config.epochs, config.batch_size, config.lr, sub_seed), on_epoch)
    acc = evaluate(net, test_set)
    save_checkpoint(run_dir / "checkpoint.bin", net, config.epochs, sub_seed)

    header = ["epoch", "train_loss", "val_loss", "val_accuracy"]
    rows = [[r.epoch, _fmt(r.train_loss), _fmt(r.val_loss), _fmt(r.val_accuracy)] for r in records]
    if test_curve:
        header.append("test_accuracy")
        for row, t in zip(rows, test_curve):
            row.append(_fmt(t))
    _write_csv(run_dir / "history.csv", header, rows)
    _write_csv(
        run_dir / "saturation.csv",
        ["epoch_from", "epoch_to", "layer", "mean_abs_delta", "max_abs_delta", "saturated_fraction"],
        [[s.epochs[0], s.epochs[1], s.layer, _fmt(s.mean_abs_delta), _fmt(s.max_abs_delta),
          _fmt(s.saturated_fraction)] for s in tracker.history],
    )
    figs = run_dir / "figures"
    figs.mkdir(exist_ok=True)
    image = test_set.images[0]
    capture_activation_maps(net, image, "final", figs / "activation_original.pgm")
    capture_activation_maps(net, negate_image(image), "final", figs / "activation_negative.pgm")
    return acc

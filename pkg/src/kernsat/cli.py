"""Command line entry point: ``kernsat {analyze,augment,train,stats,visualize}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import infometrics
from .augment import AugmentationMode, build_training_set, negate_dataset, negate_image
from .data import (CIFAR_FILES, LabeledDataset, load_dataset, write_cifar10, write_idx,
                   write_stl10)
from .harness import ALL_DATASETS, PRESETS, ExperimentConfig, load_experiment_data, run_experiment
from .stats import RunResults, format_summary, paired_t_test, shapiro_wilk, summarize


def _load(args) -> LabeledDataset:
    if args.dataset == "blobs":
        train, test = load_experiment_data(ExperimentConfig(dataset="blobs"))
        ds = train if args.split == "train" else test
    else:
        ds = load_dataset(args.dataset, args.split, args.data_dir)
    if getattr(args, "limit", None):
        ds = ds.head(args.limit)
    return ds


# --------------------------------------------------------------------------- analyze


def cmd_analyze(args) -> int:
    ds = _load(args)
    if args.negate:
        ds = negate_dataset(ds)
    poolings = ["per-image", "global"] if args.pooling == "both" else [args.pooling]
    reports = []
    for pooling in poolings:
        rep = infometrics.metrics_report(ds, pooling)
        rep.dataset = args.dataset
        rep.notes.extend(infometrics.reference_notes(args.dataset, args.negate))
        if args.entropy == "disk":
            rep.notes.append(f"disk-entropy ME: {infometrics.dataset_me(ds, 'disk'):.4f} bits")
        reports.append(rep)
    if args.format == "table":
        print("\n\n".join(r.table() for r in reports))
    else:
        payload = reports[0].to_dict() if len(reports) == 1 else [r.to_dict() for r in reports]
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


# --------------------------------------------------------------------------- augment


def cmd_augment(args) -> int:
    ds = _load(args)
    out = build_training_set(ds, args.mode)
    root = Path(args.out)
    if args.dataset == "mnist":
        d = root / "mnist"
        d.mkdir(parents=True, exist_ok=True)
        prefix = "train" if args.split == "train" else "t10k"
        write_idx(out, d / f"{prefix}-images-idx3-ubyte", d / f"{prefix}-labels-idx1-ubyte")
    elif args.dataset == "cifar10":
        d = root / "cifar-10-batches-bin"
        d.mkdir(parents=True, exist_ok=True)
        files = CIFAR_FILES[args.split]
        for fname, idx in zip(files, np.array_split(np.arange(len(out)), len(files))):
            write_cifar10(out.subset(idx), d / fname)
    elif args.dataset == "stl10":
        write_stl10(out, root / "stl10_binary", args.split)
    else:
        print(f"augment: no binary format for dataset {args.dataset!r}", file=sys.stderr)
        return 2
    print(json.dumps({"dataset": args.dataset, "split": args.split, "mode": AugmentationMode.parse(args.mode).value,
                      "images": len(out), "negatives": int(out.negative.sum()), "out": str(root)}))
    return 0


# --------------------------------------------------------------------------- train


_OVERRIDES = ("dataset", "epochs", "runs", "seed", "lr", "batch_size", "split", "arch", "eps",
              "out_dir", "data_dir", "train_subset", "test_subset")


def cmd_train(args) -> int:
    overrides = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k) is not None}
    if args.mode:
        overrides["mode"] = args.mode
    if args.config:
        cfg = ExperimentConfig.from_json(args.config, overrides, args.preset)
    else:
        cfg = ExperimentConfig.from_dict(overrides, args.preset)
    table = run_experiment(cfg)
    print(table.format())
    print(f"results: {Path(cfg.out_dir) / cfg.identity() / 'results.csv'}")
    return 0


# --------------------------------------------------------------------------- stats


def read_runs_csv(path) -> dict[str, list[float]]:
    """Accepts ``condition,run,accuracy`` or the ``arch,dataset,mode,run,accuracy`` results schema."""
    runs: dict[str, dict[int, float]] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        fields = reader.fieldnames or []
        for lineno, row in enumerate(reader, start=2):
            try:
                if "condition" in fields:
                    cond = row["condition"]
                else:
                    cond = f"{row['dataset']}/{row['mode']}"
                runs.setdefault(cond, {})[int(row["run"])] = float(row["accuracy"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path} line {lineno}: {exc}") from None
    return {c: [v[k] for k in sorted(v)] for c, v in runs.items()}


def _default_pairs(conditions):
    pairs = []
    for c in conditions:
        if c.endswith("/Standard"):
            other = c[: -len("Standard")] + "Supplemented"
            if other in conditions:
                pairs.append((c, other))
    return pairs


def cmd_stats(args) -> int:
    runs = read_runs_csv(args.csv)
    rows = summarize([RunResults(k, tuple(v)) for k, v in runs.items()])
    outcomes = []
    for cond, acc in runs.items():
        if 3 <= len(acc) <= 50 and np.ptp(acc) > 0:
            outcomes.append({"condition": cond, **shapiro_wilk(acc, args.alpha).to_dict()})
    pairs = [tuple(p) for p in args.pair] if args.pair else _default_pairs(runs)
    for a, b in pairs:
        if a not in runs or b not in runs:
            raise ValueError(f"unknown condition in pair ({a}, {b})")
        try:
            res = paired_t_test(runs[a], runs[b], not args.one_tailed, args.alpha)
        except ValueError as exc:
            outcomes.append({"pair": [a, b], "error": str(exc)})
            continue
        outcomes.append({"pair": [a, b], **res.to_dict()})
    print(format_summary(rows))
    doc = json.dumps({"summary": [r.__dict__ for r in rows], "tests": outcomes}, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(doc + "\n")
    else:
        print(doc)
    return 0


# --------------------------------------------------------------------------- visualize


def cmd_visualize(args) -> int:
    from .engine.checkpoint import load_checkpoint
    from .saturation import capture_activation_maps, load_snapshots, render_kernel_grid

    if args.snapshot:
        snaps = {s.layer: s for s in load_snapshots(args.snapshot)}
        layer = args.layer or next(iter(snaps))
        if layer not in snaps:
            raise KeyError(f"layer {layer!r} not in snapshot; have {list(snaps)}")
        render_kernel_grid(snaps[layer], args.out)
    else:
        if not args.checkpoint:
            raise ValueError("visualize needs --snapshot or --checkpoint")
        net, _ = load_checkpoint(args.checkpoint)
        ds = _load(args)
        image = ds.images[args.index]
        if args.negate:
            image = negate_image(image)
        capture_activation_maps(net, image, args.layer or "final", args.out)
    print(args.out)
    return 0


# --------------------------------------------------------------------------- parser


def _dataset_args(p, required=True):
    p.add_argument("--dataset", choices=ALL_DATASETS, required=required)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--data-dir", help="dataset root (default: $KERNSAT_DATA_DIR)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernsat", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="ME / SNR metrics report for a dataset")
    _dataset_args(p)
    p.add_argument("--pooling", choices=["per-image", "global", "both"], default="per-image")
    p.add_argument("--negate", action="store_true", help="analyze the negated images")
    p.add_argument("--entropy", choices=["histogram", "disk"], default="histogram")
    p.add_argument("--limit", type=int, help="use only the first N images")
    p.add_argument("--format", choices=["json", "table"], default="json")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("augment", help="write a negative-image dataset in its source format")
    _dataset_args(p)
    p.add_argument("--mode", default="NegativesOnly", help="Supplemented or NegativesOnly")
    p.add_argument("--limit", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="run an experiment (train, evaluate, persist artifacts)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--dataset", choices=ALL_DATASETS)
    p.add_argument("--mode", action="append", help="augmentation mode (repeatable)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--split", type=float)
    p.add_argument("--arch")
    p.add_argument("--eps", type=float)
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--data-dir")
    p.add_argument("--train-subset", type=int)
    p.add_argument("--test-subset", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("stats", help="summaries, Shapiro-Wilk and paired t-tests over run results")
    p.add_argument("--csv", required=True)
    p.add_argument("--pair", nargs=2, action="append", metavar=("A", "B"))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--one-tailed", action="store_true")
    p.add_argument("--out", help="write the JSON document here instead of stdout")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("visualize", help="render kernel grids or activation maps as PGM/PPM")
    p.add_argument("--snapshot")
    p.add_argument("--checkpoint")
    p.add_argument("--layer")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--negate", action="store_true")
    p.add_argument("--out", required=True)
    _dataset_args(p, required=False)
    p.set_defaults(func=cmd_visualize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"kernsat {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

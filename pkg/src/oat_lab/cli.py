"""``oat-lab`` command line.

Exit codes: 0 success, 1 verification failure, 2 config error, 3 data error.

Run outputs:
  metrics.csv   epoch,phase,train_loss,test_accuracy   (deterministic)
  timing.csv    epoch,phase,epoch_train_seconds,eval_seconds
  summary.json  final/best accuracy, effective config, wall time
  model.npz     final network checkpoint
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import nnet
from .data import Dataset, load_cifar10, load_mnist_idx, synth_blobs
from .errors import ConfigError, ContractError, FormatError
from .trainer import History, TrainConfig, run_training

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3
METRICS_HEADER = ["epoch", "phase", "train_loss", "test_accuracy"]
TIMING_HEADER = ["epoch", "phase", "epoch_train_seconds", "eval_seconds"]
SWEEP_HEADER = ["axis_value", "mode", "final_accuracy", "best_accuracy", "status"]
SWEEP_AXES = {"lr": float, "batch_size": int, "pretrain_epochs": int}

_DATASET_FIELDS = {
    "blobs": {"class_count": 3, "per_class": 100, "dim": 2, "spread": 1.0, "seed": 0},
    "mnist": {"train_images": None, "train_labels": None, "test_images": None,
              "test_labels": None, "train_limit": None, "test_limit": None},
    "cifar10": {"directory": None},
}
_MODEL_FIELDS = {"mlp": {"hidden": [128, 64], "init": "fan_in"}, "lightweight_cifar": {"init": "fan_in"}}
_TRAIN_FIELDS = {f.name for f in fields(TrainConfig)}


@dataclass
class RunSpec:
    dataset: dict
    model: dict
    train: TrainConfig
    output_dir: str | None = None

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "model": self.model, **asdict(self.train),
                "output_dir": self.output_dir}


def _section(raw, name: str, table: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(name, "must be an object with a 'kind' field")
    kind = raw.get("kind")
    if kind not in table:
        raise ConfigError(f"{name}.kind", f"must be one of {sorted(table)}, got {kind!r}")
    unknown = set(raw) - set(table[kind]) - {"kind"}
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown field")
    return {"kind": kind, **table[kind], **{k: v for k, v in raw.items() if k != "kind"}}


def parse_run_spec(raw: dict, base_dir: Path = Path(".")) -> RunSpec:
    """Validate a config mapping, filling defaults and resolving relative paths."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(raw) - _TRAIN_FIELDS - {"dataset", "model", "output_dir"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    if "dataset" not in raw:
        raise ConfigError("dataset", "missing")
    dataset = _section(raw["dataset"], "dataset", _DATASET_FIELDS)
    model = _section(raw.get("model", {"kind": "mlp"}), "model", _MODEL_FIELDS)

    for key, value in dataset.items():
        if key.endswith(("_images", "_labels")) or key == "directory":
            if value is None:
                raise ConfigError(f"dataset.{key}", "missing")
            path = Path(value)
            if not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                raise ConfigError(f"dataset.{key}", f"path does not exist: {path}")
            dataset[key] = str(path)
    if model["init"] not in nnet.INIT_SCHEMES:
        raise ConfigError("model.init", f"must be one of {nnet.INIT_SCHEMES}, got {model['init']!r}")
    if model["kind"] == "mlp":
        hidden = model["hidden"]
        if not isinstance(hidden, list) or not all(isinstance(h, int) and h > 0 for h in hidden):
            raise ConfigError("model.hidden", "must be a list of positive integers")

    train = TrainConfig(**{k: raw[k] for k in _TRAIN_FIELDS if k in raw})
    return RunSpec(dataset=dataset, model=model, train=train, output_dir=raw.get("output_dir"))


def load_config(path) -> RunSpec:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_run_spec(raw, path.parent)


def load_datasets(spec: dict) -> tuple[Dataset, Dataset]:
    kind = spec["kind"]
    if kind == "blobs":
        try:
            return synth_blobs(spec["class_count"], spec["per_class"], spec["dim"],
                               spec["spread"], spec["seed"])
        except (ContractError, TypeError) as exc:
            raise ConfigError("dataset", str(exc)) from None
    if kind == "mnist":
        train = load_mnist_idx(spec["train_images"], spec["train_labels"], split="train",
                               limit=spec["train_limit"])
        test = load_mnist_idx(spec["test_images"], spec["test_labels"], split="test",
                              stats=train.normalization_stats, limit=spec["test_limit"])
        return train, test
    return load_cifar10(spec["directory"])


def build_network(model: dict, train: Dataset, seed: int) -> nnet.Network:
    shape = train.sample_shape
    if model["kind"] == "lightweight_cifar":
        if shape != (3, 32, 32):
            raise ConfigError("model.kind", f"lightweight_cifar needs 3x32x32 inputs, dataset has {shape}")
        layers = nnet.lightweight_cifar(train.class_count)
    else:
        layers = nnet.mlp(int(np.prod(shape)), model["hidden"], train.class_count)
    return nnet.init_network(layers, train.class_count, seed, input_shape=shape, init=model["init"])


def _write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_run_outputs(out: Path, spec: RunSpec, history: History, net: nnet.Network,
                      wall_seconds: float) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "metrics.csv", METRICS_HEADER,
               ([m.epoch, m.phase, repr(m.train_loss), repr(m.test_accuracy)] for m in history.epochs))
    _write_csv(out / "timing.csv", TIMING_HEADER,
               ([m.epoch, m.phase, f"{m.epoch_train_seconds:.6f}", f"{m.eval_seconds:.6f}"]
                for m in history.epochs))
    summary = {
        **history.summary(),
        "config": spec.to_dict(),
        "total_wall_seconds": wall_seconds,
        "mean_epoch_train_seconds": float(np.mean([m.epoch_train_seconds for m in history.epochs])),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    nnet.save_network(net, out / "model.npz")


def execute(spec: RunSpec, out: Path, datasets=None, log=None) -> History:
    start = time.perf_counter()
    train, test = datasets if datasets is not None else load_datasets(spec.dataset)
    net = build_network(spec.model, train, spec.train.seed)
    net, history = run_training(net, train, test, spec.train, progress=log)
    write_run_outputs(out, spec, history, net, time.perf_counter() - start)
    return history


def _print_epoch(m) -> None:
    print(f"epoch {m.epoch:3d} [{m.phase}] loss={m.train_loss:.5f} "
          f"acc={m.test_accuracy:.4f} train={m.epoch_train_seconds:.2f}s eval={m.eval_seconds:.2f}s",
          flush=True)


def _resolve_out(spec: RunSpec, out) -> Path:
    return Path(out or spec.output_dir or "runs/latest")


def cmd_train(config_file, out=None, seed=None, quiet=False) -> int:
    try:
        spec = load_config(config_file)
        if seed is not None:
            spec.train = TrainConfig(**{**asdict(spec.train), "seed": seed})
        datasets = load_datasets(spec.dataset)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ContractError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        history = execute(spec, _resolve_out(spec, out), datasets, log=None if quiet else _print_epoch)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    s = history.summary()
    print(f"final accuracy {s['final_accuracy']:.4f}, best {s['best_accuracy']:.4f} (epoch {s['best_epoch']})")
    return EXIT_OK


def _sweep_cells(axis: str, values: list, base: TrainConfig):
    """(label, mode, config-or-error) for every cell of the sweep."""
    base_fields = asdict(base)
    if axis == "batch_size" and base.eval_batch_size == base.batch_size:
        base_fields["eval_batch_size"] = None
    oat_eval = base.eval_mode if base.mode == "oat" else "oat_batched"
    conventional = {**base_fields, "mode": "conventional", "eval_mode": "conventional"}
    oat = {**base_fields, "mode": "oat", "eval_mode": oat_eval}
    if axis == "pretrain_epochs":
        yield "baseline", "conventional", conventional
        for v in values:
            yield v, "oat", {**oat, axis: v}
        return
    for v in values:
        yield v, "conventional", {**conventional, axis: v}
        yield v, "oat", {**oat, axis: v}


def parse_sweep_values(axis: str, values: str) -> list:
    cast = SWEEP_AXES[axis]
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise ConfigError("values", "at least one value is required")
    try:
        return [cast(v) for v in items]
    except ValueError:
        raise ConfigError("values", f"cannot parse {values!r} as {cast.__name__}") from None


def cmd_sweep(config_file, axis: str, values, out=None, quiet=False) -> int:
    """Run both training modes for each value of ``axis`` and write sweep.csv.

    Every cell uses the same seed and writes into its own subdirectory; a
    failing cell is recorded and the sweep continues.
    """
    try:
        if axis not in SWEEP_AXES:
            raise ConfigError("axis", f"must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
        if isinstance(values, str):
            values = parse_sweep_values(axis, values)
        if not values:
            raise ConfigError("values", "at least one value is required")
        spec = load_config(config_file)
        datasets = load_datasets(spec.dataset)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ContractError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA

    root = _resolve_out(spec, out)
    rows, codes = [], []
    for label, mode, fields_ in _sweep_cells(axis, values, spec.train):
        cell_dir = root / f"{axis}={label}" / mode
        try:
            cell = RunSpec(spec.dataset, spec.model, TrainConfig(**fields_), str(cell_dir))
            history = execute(cell, cell_dir, datasets)
        except ConfigError as exc:
            rows.append([label, mode, "", "", f"config_error: {exc}"])
            codes.append(EXIT_CONFIG)
        except (FormatError, ContractError) as exc:
            rows.append([label, mode, "", "", f"data_error: {exc}"])
            codes.append(EXIT_DATA)
        else:
            finite = all(math.isfinite(m.train_loss) for m in history.epochs)
            rows.append([label, mode, repr(history.last_accuracy), repr(history.best_accuracy),
                         "ok" if finite else "diverged"])
        if not quiet:
            print(",".join(str(v) for v in rows[-1]), flush=True)
    root.mkdir(parents=True, exist_ok=True)
    _write_csv(root / "sweep.csv", SWEEP_HEADER, rows)
    return codes[0] if codes else EXIT_OK


def cmd_verify() -> int:
    from . import verify

    results = verify.run_all()
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    failed = [name for name, passed, _ in results if not passed]
    if failed:
        print(f"{len(failed)} of {len(results)} properties failed: {', '.join(failed)}")
        return EXIT_VERIFY
    print(f"all {len(results)} properties passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oat-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("sweep", help="ablation over one config axis, both training modes")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out")
    p.add_argument("--quiet", action="store_true")

    sub.add_parser("verify", help="run the property suite")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        return cmd_train(args.config, args.out, args.seed, args.quiet)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.axis, args.values, args.out, args.quiet)
    return cmd_verify()


if __name__ == "__main__":
    sys.exit(main())

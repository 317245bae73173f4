"""Train the lightweight CIFAR-10 model in both modes and compare with the published numbers.

Expects the CIFAR-10 binary distribution (data_batch_1.bin ... test_batch.bin).
Each mode takes hours on a CPU.

    python scripts/reproduce_cifar10.py --data data/cifar-10-batches-bin --out runs/cifar10
"""
import argparse
import json
from pathlib import Path

from oat_lab.cli import execute, parse_run_spec
from oat_lab.data import load_cifar10

PUBLISHED = {"conventional": 0.65660, "oat": 0.66540}
TOLERANCE = 0.025


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data", required=True)
    parser.add_argument("--out", default="runs/cifar10")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--pretrain", type=int, default=10)
    args = parser.parse_args()

    datasets = load_cifar10(args.data)
    results = {}
    for mode in ("conventional", "oat"):
        spec = parse_run_spec({
            "dataset": {"kind": "cifar10", "directory": args.data},
            "model": {"kind": "lightweight_cifar"},
            "mode": mode, "total_epochs": args.epochs, "pretrain_epochs": args.pretrain,
            "seed": args.seed,
        })
        history = execute(spec, Path(args.out) / mode, datasets,
                          log=lambda m: print(f"{mode} {m.epoch:3d} {m.phase:12s} "
                                              f"loss {m.train_loss:.4f} acc {m.test_accuracy:.4f}", flush=True))
        results[mode] = history.last_accuracy

    report = {}
    for mode, acc in results.items():
        ok = abs(acc - PUBLISHED[mode]) <= TOLERANCE
        report[mode] = {"accuracy": acc, "published": PUBLISHED[mode], "within_tolerance": ok}
        print(f"{mode:12s} {acc:.4f} (published {PUBLISHED[mode]:.4f}) {'ok' if ok else 'outside tolerance'}")
    report["oat_at_least_baseline"] = results["oat"] >= results["conventional"]
    Path(args.out).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "reproduction.json").write_text(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()

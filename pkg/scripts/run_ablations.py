"""Desk-scale analogues of the learning-rate, batch-size and pre-training ablations.

    python scripts/make_mnist_subset.py
    python scripts/run_ablations.py --config scripts/configs/mnist.json --out runs/ablations
"""
import argparse
import sys
from pathlib import Path

from oat_lab.cli import cmd_sweep

SWEEPS = {
    "lr": "0.01,0.001,0.0001",
    "batch_size": "32,64,128",
    "pretrain_epochs": "0,5,10,20",
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default="scripts/configs/mnist.json")
    parser.add_argument("--out", default="runs/ablations")
    parser.add_argument("--axes", default=",".join(SWEEPS), help="subset of " + ",".join(SWEEPS))
    args = parser.parse_args()

    worst = 0
    for axis in args.axes.split(","):
        print(f"== {axis}: {SWEEPS[axis]}")
        code = cmd_sweep(args.config, axis, SWEEPS[axis], Path(args.out) / axis)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())

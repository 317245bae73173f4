"""How often anchor-based training survives the switch from cross-entropy pre-training.

Runs the MNIST parity setup for several seeds and initializations and reports
final accuracies; a diverged run shows up as chance-level accuracy and a NaN loss.

    python scripts/seed_stability.py --data data/mnist-subset --seeds 0-7
"""
import argparse
import math
from pathlib import Path

from oat_lab import nnet
from oat_lab.data import load_mnist_idx
from oat_lab.mnist_subset import FILES
from oat_lab.trainer import TrainConfig, run_training


def parse_seeds(text):
    lo, _, hi = text.partition("-")
    return range(int(lo), int(hi or lo) + 1)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data", default="data/mnist-subset")
    parser.add_argument("--seeds", default="0-7")
    parser.add_argument("--init", default="fan_in,glorot")
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--pretrain", type=int, default=5)
    args = parser.parse_args()

    d = Path(args.data)
    train = load_mnist_idx(d / FILES["train_images"], d / FILES["train_labels"])
    test = load_mnist_idx(d / FILES["test_images"], d / FILES["test_labels"], split="test",
                          stats=train.normalization_stats)
    print("init,seed,mode,final_accuracy,final_loss")
    for init in args.init.split(","):
        for seed in parse_seeds(args.seeds):
            for mode in ("conventional", "oat"):
                cfg = TrainConfig(mode=mode, total_epochs=args.epochs, pretrain_epochs=args.pretrain, seed=seed)
                net = nnet.init_network(nnet.mlp(784, [128, 64], 10), 10, seed=seed,
                                        input_shape=(1, 28, 28), init=init)
                _, hist = run_training(net, train, test, cfg)
                loss = hist.epochs[-1].train_loss
                print(f"{init},{seed},{mode},{hist.last_accuracy:.4f},{'nan' if math.isnan(loss) else f'{loss:.4g}'}",
                      flush=True)


if __name__ == "__main__":
    main()

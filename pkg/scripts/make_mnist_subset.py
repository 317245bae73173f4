"""Write the desk-scale MNIST subset used by the parity experiments.

    python scripts/make_mnist_subset.py --out data/mnist-subset
    python scripts/make_mnist_subset.py --source ~/datasets/mnist --out data/mnist-subset
"""
import argparse

from oat_lab.mnist_subset import write_mnist_subset


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/mnist-subset")
    parser.add_argument("--source", help="directory with full MNIST IDX files; default: mlxtend sample")
    parser.add_argument("--train-count", type=int, default=5000)
    parser.add_argument("--test-count", type=int, default=1000)
    args = parser.parse_args()
    paths = write_mnist_subset(args.out, args.source, args.train_count, args.test_count)
    for key, path in paths.items():
        print(f"{key}: {path}")


if __name__ == "__main__":
    main()

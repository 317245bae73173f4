"""Build a desk-scale MNIST subset as IDX files.

Two sources are supported: a directory holding the standard MNIST IDX files
(the first ``train_count``/``test_count`` samples are taken), or, when no
such directory is given, the 5,000-image MNIST sample bundled with mlxtend,
split per class into 400 train and 100 test images.
"""
from __future__ import annotations

import gzip
from pathlib import Path

import numpy as np

from .data import read_idx_images, read_idx_labels, write_idx

FILES = {
    "train_images": "train-images-idx3-ubyte.gz",
    "train_labels": "train-labels-idx1-ubyte.gz",
    "test_images": "t10k-images-idx3-ubyte.gz",
    "test_labels": "t10k-labels-idx1-ubyte.gz",
}


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def _from_idx(source: Path, train_count: int, test_count: int):
    xs = read_idx_images(_find(source, "train-images-idx3-ubyte"))[:train_count]
    ys = read_idx_labels(_find(source, "train-labels-idx1-ubyte"))[:train_count]
    xt = read_idx_images(_find(source, "t10k-images-idx3-ubyte"))[:test_count]
    yt = read_idx_labels(_find(source, "t10k-labels-idx1-ubyte"))[:test_count]
    return xs, ys, xt, yt


def _from_mlxtend(test_per_class: int = 100, seed: int = 0):
    from importlib.resources import files

    path = files("mlxtend.data") / "data" / "mnist_5k.csv.gz"
    with gzip.open(path) as fh:
        table = np.loadtxt(fh, delimiter=",", dtype=np.float64)
    images = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        train_idx.append(idx[:-test_per_class])
        test_idx.append(idx[-test_per_class:])
    rng = np.random.default_rng(seed)
    # The source is sorted by class; shuffle so evaluation batches mix classes.
    train_idx = rng.permutation(np.concatenate(train_idx))
    test_idx = rng.permutation(np.concatenate(test_idx))
    return images[train_idx], labels[train_idx], images[test_idx], labels[test_idx]


def write_mnist_subset(out_dir, source_dir=None, train_count: int = 5000,
                       test_count: int = 1000) -> dict:
    """Write the four IDX files into ``out_dir`` and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if source_dir is not None:
        arrays = _from_idx(Path(source_dir), train_count, test_count)
    else:
        arrays = _from_mlxtend()
    paths = {}
    for (key, name), arr in zip(FILES.items(), arrays):
        write_idx(out / name, arr)
        paths[key] = out / name
    return paths

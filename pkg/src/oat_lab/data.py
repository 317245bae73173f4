"""Dataset loading and batch iteration."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError
from .tensor import DEFAULT_DTYPE, is_one_hot, one_hot

CIFAR_RECORD = 1 + 3 * 32 * 32
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILE = "test_batch.bin"
MNIST_IMAGE_MAGIC = 2051
MNIST_LABEL_MAGIC = 2049


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # N x D or N x ch x h x w
    labels: np.ndarray  # N x C one-hot
    class_count: int
    split: str = "train"
    # (mean, std) per channel, computed on the train split; None when unnormalized.
    normalization_stats: tuple | None = None

    def __post_init__(self):
        if self.inputs.shape[0] < 1:
            raise ContractError("dataset is empty")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ContractError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")
        if self.labels.shape[1] != self.class_count or not is_one_hot(self.labels):
            raise ContractError("labels must be one-hot rows over class_count classes")
        if not np.all(np.isfinite(self.inputs)):
            raise ContractError("inputs contain non-finite values")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def sample_shape(self) -> tuple:
        return tuple(self.inputs.shape[1:])

    def class_indices(self) -> np.ndarray:
        return self.labels.argmax(axis=1)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.inputs[indices], self.labels[indices], self.class_count,
                       self.split, self.normalization_stats)


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


def channel_stats(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std of an N x ch x h x w array."""
    axes = (0, 2, 3)
    mean = images.mean(axis=axes, dtype=np.float64)
    std = images.std(axis=axes, dtype=np.float64)
    return mean, np.where(std > 0, std, 1.0)


def standardize(images: np.ndarray, stats) -> np.ndarray:
    mean, std = stats
    out = (images - mean[None, :, None, None]) / std[None, :, None, None]
    return out.astype(DEFAULT_DTYPE)


# CIFAR-10 ----------------------------------------------------------------------

def parse_cifar10_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Raw uint8 images (N x 3 x 32 x 32) and integer labels from one binary batch file."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD:
        raise FormatError(f"{path}: size {raw.size} is not a positive multiple of {CIFAR_RECORD} bytes")
    records = raw.reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise FormatError(f"{path}: record {bad[0]} has label byte {labels[bad[0]]}")
    return records[:, 1:].reshape(-1, 3, 32, 32), labels


def load_cifar10(directory) -> tuple[Dataset, Dataset]:
    directory = Path(directory)
    parts = [parse_cifar10_file(directory / name) for name in CIFAR_TRAIN_FILES]
    train_x = np.concatenate([p[0] for p in parts]).astype(np.float32) / 255
    train_y = np.concatenate([p[1] for p in parts])
    test_x, test_y = parse_cifar10_file(directory / CIFAR_TEST_FILE)
    test_x = test_x.astype(np.float32) / 255

    stats = channel_stats(train_x)
    train = Dataset(standardize(train_x, stats), one_hot(train_y, 10), 10, "train", stats)
    test = Dataset(standardize(test_x, stats), one_hot(test_y, 10), 10, "test", stats)
    return train, test


# MNIST IDX ---------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(path, magic: int, ndim: int) -> np.ndarray:
    data = _read_bytes(path)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise FormatError(f"{path}: truncated header")
    found, *dims = struct.unpack(f">{1 + ndim}i", data[:header])
    if found != magic:
        raise FormatError(f"{path}: magic number {found}, expected {magic}")
    payload = np.frombuffer(data, dtype=np.uint8, offset=header)
    if payload.size != int(np.prod(dims)):
        raise FormatError(f"{path}: header declares {dims} but payload has {payload.size} bytes")
    return payload.reshape(dims)


def read_idx_images(path) -> np.ndarray:
    return _parse_idx(path, MNIST_IMAGE_MAGIC, 3)


def read_idx_labels(path) -> np.ndarray:
    return _parse_idx(path, MNIST_LABEL_MAGIC, 1)


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as an IDX file (gzip-compressed for ``.gz`` paths)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = MNIST_IMAGE_MAGIC if array.ndim == 3 else MNIST_LABEL_MAGIC
    blob = struct.pack(f">{1 + array.ndim}i", magic, *array.shape) + array.tobytes()
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(blob)


def load_mnist_idx(image_path, label_path, *, split: str = "train", stats=None,
                   limit: int | None = None) -> Dataset:
    """Load an IDX image/label pair as N x 1 x 28 x 28 standardized inputs.

    ``stats`` must be the train-split statistics when loading a test split;
    when omitted they are computed from the loaded images themselves.
    """
    images = read_idx_images(image_path)
    labels = read_idx_labels(label_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise FormatError(f"label value {labels.max()} out of range 0-9")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    x = images[:, None, :, :].astype(np.float32) / 255
    if stats is None:
        stats = channel_stats(x)
    return Dataset(standardize(x, stats), one_hot(labels, 10), 10, split, stats)


# Synthetic blobs -----------------------------------------------------------------

def synth_blobs(class_count: int, per_class: int, dim: int, spread: float,
                seed: int) -> tuple[Dataset, Dataset]:
    """Gaussian blobs around centers spaced evenly on a circle of radius
    ``6 * spread`` in the first two coordinates.

    Each class contributes ``max(1, per_class // 5)`` test points and the
    rest as train points, so ``per_class`` must be at least 2. Both splits are returned in a seeded,
    class-interleaved order.
    """
    if class_count < 2 or per_class < 2 or dim < 2 or spread < 0:
        raise ContractError(
            f"invalid blob parameters: class_count={class_count}, per_class={per_class}, "
            f"dim={dim}, spread={spread}")
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(class_count) / class_count
    centers = np.zeros((class_count, dim))
    centers[:, 0] = 6 * spread * np.cos(angles)
    centers[:, 1] = 6 * spread * np.sin(angles)

    n_test = max(1, per_class // 5)
    splits = {"train": ([], []), "test": ([], [])}
    for j in range(class_count):
        pts = centers[j] + rng.normal(0.0, 1.0, size=(per_class, dim)) * spread
        for name, block in (("train", pts[:per_class - n_test]), ("test", pts[per_class - n_test:])):
            splits[name][0].append(block)
            splits[name][1].append(np.full(len(block), j))

    out = []
    for name in ("train", "test"):
        x = np.concatenate(splits[name][0]).astype(DEFAULT_DTYPE)
        y = np.concatenate(splits[name][1])
        order = rng.permutation(len(y))
        out.append(Dataset(x[order], one_hot(y[order], class_count), class_count, name))
    return out[0], out[1]


# Batching ----------------------------------------------------------------------

def epoch_order(n: int, shuffle: bool, seed: int, epoch: int) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


def epoch_batches(ds: Dataset, batch_size: int, shuffle: bool = False, seed: int = 0,
                  epoch: int = 0) -> list[Batch]:
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    order = epoch_order(len(ds), shuffle, seed, epoch)
    batches = []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        batches.append(Batch(ds.inputs[idx], ds.labels[idx], idx))
    return batches

"""Dense numeric core.

Tensors are plain row-major numpy arrays. The helpers here add the shape
checks and error semantics the rest of the package relies on.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, EmptyBatchError, ShapeError

DEFAULT_DTYPE = np.float32
# Divisor clamp used by the anchor division path (see oat.oat_targets).
EPS = 1e-12

_EWISE = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
}


def as_tensor(values, dtype=DEFAULT_DTYPE) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=dtype)


def _require_2d(a: np.ndarray, name: str) -> None:
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _require_2d(a, "a")
    _require_2d(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def ewise(op: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise ``op`` on equal shapes, or an M x C tensor against a
    length-C row (1-D or 1 x C)."""
    try:
        fn = _EWISE[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_EWISE)}") from None
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        row = b.reshape(-1) if b.ndim == 1 or (b.ndim == 2 and b.shape[0] == 1) else None
        if row is None or a.ndim != 2 or a.shape[1] != row.shape[0]:
            raise ShapeError(f"cannot combine shapes {a.shape} and {b.shape}")
        b = row[None, :]
    if op == "div" and np.any(np.abs(b) < EPS):
        raise DomainError("division by a value smaller than 1e-12 in magnitude")
    return fn(a, b)


def softmax_rows(a: np.ndarray) -> np.ndarray:
    _require_2d(a, "a")
    if a.shape[1] < 1:
        raise ShapeError("softmax needs at least one column")
    z = a - a.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(a: np.ndarray) -> np.ndarray:
    _require_2d(a, "a")
    z = a - a.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def mean_rows(a: np.ndarray) -> np.ndarray:
    _require_2d(a, "a")
    if not np.issubdtype(a.dtype, np.floating):
        a = a.astype(np.float64)
    m = a.shape[0]
    if m == 0:
        raise EmptyBatchError("mean over an empty batch")
    if m == 1:
        return a.copy()
    # An axis-0 reduction adds whole rows in order, so the summation order is fixed.
    return (np.ascontiguousarray(a).sum(axis=0) / a.dtype.type(m))[None, :]


def argmax_rows(a: np.ndarray) -> list[int]:
    _require_2d(a, "a")
    # np.argmax returns the first maximal index, i.e. lowest-index tie-break.
    return [int(i) for i in np.argmax(a, axis=1)]


def is_one_hot(labels: np.ndarray) -> bool:
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[0] == 0:
        return False
    binary = np.all((labels == 0) | (labels == 1))
    return bool(binary and np.all(labels.sum(axis=1) == 1))


def one_hot(indices, class_count: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros((indices.shape[0], class_count), dtype=dtype)
    out[np.arange(indices.shape[0]), indices] = 1
    return out

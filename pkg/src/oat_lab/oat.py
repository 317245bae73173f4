"""Online anchor-based targets.

The model is trained to regress ``labels / anchor - 1`` where the anchor is
the softmax of the mean model output over the current batch. At test time
``anchor * (prediction + 1)`` maps predictions back to class-label space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .tensor import EPS, argmax_rows, ewise, is_one_hot, mean_rows, softmax_rows


@dataclass(frozen=True)
class AnchorVector:
    probs: np.ndarray  # 1 x C, strictly positive, sums to 1

    @property
    def class_count(self) -> int:
        return self.probs.shape[1]


def anchor_of_outputs(outputs: np.ndarray) -> AnchorVector:
    """Softmax of the batch-mean output.

    The result is a plain array, so nothing downstream differentiates
    through it; callers treat it as a constant for the current step.
    """
    outputs = np.asarray(outputs)
    if outputs.ndim != 2:
        raise ShapeError(f"outputs must be B x C, got {outputs.shape}")
    return AnchorVector(softmax_rows(mean_rows(outputs)))


def oat_targets(labels: np.ndarray, anchor: AnchorVector) -> np.ndarray:
    labels = np.asarray(labels)
    if not is_one_hot(labels):
        raise ContractError("labels must be one-hot rows")
    if labels.shape[1] != anchor.class_count:
        raise ShapeError(f"labels {labels.shape} do not match anchor {anchor.probs.shape}")
    a = anchor.probs
    labels = labels.astype(a.dtype, copy=False)
    # 0 / a - 1 is exactly -1, so off-class targets never depend on the anchor.
    return ewise("div", labels, np.maximum(a, a.dtype.type(EPS))) - 1


def oat_loss_and_grad(targets: np.ndarray, preds: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-element mean squared error and its gradient w.r.t. ``preds``."""
    targets = np.asarray(targets)
    preds = np.asarray(preds)
    if targets.shape != preds.shape:
        raise ShapeError(f"targets {targets.shape} and preds {preds.shape} differ")
    diff = preds - targets.astype(preds.dtype, copy=False)
    n = diff.size
    loss = float(np.sum(diff.astype(np.float64) ** 2)) / n
    grad = diff * preds.dtype.type(2.0 / n)
    return loss, grad


def inverse_transform(anchor: AnchorVector, preds: np.ndarray) -> np.ndarray:
    preds = np.asarray(preds)
    if preds.ndim != 2 or preds.shape[1] != anchor.class_count:
        raise ShapeError(f"preds {preds.shape} do not match anchor {anchor.probs.shape}")
    return ewise("mul", preds + 1, anchor.probs)


def predict_classes(scores: np.ndarray) -> list[int]:
    return argmax_rows(np.asarray(scores))


def predict_batch(outputs: np.ndarray) -> list[int]:
    """Class decisions for one batch of raw OAT predictions, using the
    batch's own outputs as the anchor."""
    return predict_classes(inverse_transform(anchor_of_outputs(outputs), outputs))

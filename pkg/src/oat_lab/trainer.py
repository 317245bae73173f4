"""Training loops for conventional cross-entropy and anchor-based training."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import oat
from .data import Batch, Dataset, epoch_batches
from .errors import ConfigError, ContractError
from .nnet import Network, OptimizerState, backward, cross_entropy_loss, forward, sgd_step
from .tensor import argmax_rows, log_softmax_rows

MODES = ("conventional", "oat")
EVAL_MODES = ("conventional", "oat_batched", "oat_single")


@dataclass
class TrainConfig:
    mode: str = "conventional"
    total_epochs: int = 100
    pretrain_epochs: int = 10
    batch_size: int = 32
    lr: float = 0.001
    momentum: float = 0.9
    seed: int = 0
    # None resolves to batch_size.
    eval_batch_size: int | None = None
    # None resolves to "conventional" or "oat_batched" depending on mode.
    eval_mode: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.eval_mode is None:
            self.eval_mode = "oat_batched" if self.mode == "oat" else "conventional"
        if self.eval_batch_size is None:
            self.eval_batch_size = self.batch_size
        for name in ("total_epochs", "pretrain_epochs", "batch_size", "eval_batch_size", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(name, f"must be an integer, got {value!r}")
        for name in ("lr", "momentum"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(name, f"must be a number, got {value!r}")
        if self.total_epochs < 1:
            raise ConfigError("total_epochs", "must be >= 1")
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs", "must be >= 0")
        # Pre-training only exists in oat mode; conventional runs ignore it.
        if self.mode == "oat" and self.pretrain_epochs > self.total_epochs:
            raise ConfigError("pretrain_epochs", f"must lie in [0, total_epochs={self.total_epochs}]")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if self.eval_batch_size < 1:
            raise ConfigError("eval_batch_size", "must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr", f"must be > 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum", f"must lie in [0, 1), got {self.momentum}")
        if self.eval_mode not in EVAL_MODES:
            raise ConfigError("eval_mode", f"must be one of {EVAL_MODES}, got {self.eval_mode!r}")

    def phase(self, epoch: int) -> str:
        if self.mode == "conventional":
            return "ce"
        return "pretrain_ce" if epoch < self.pretrain_epochs else "oat"


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    phase: str
    train_loss: float
    test_accuracy: float
    epoch_train_seconds: float
    eval_seconds: float


@dataclass
class History:
    config: dict
    epochs: list = field(default_factory=list)

    @property
    def last_accuracy(self) -> float:
        return self.epochs[-1].test_accuracy

    @property
    def best_accuracy(self) -> float:
        return max(m.test_accuracy for m in self.epochs)

    def summary(self) -> dict:
        best = max(self.epochs, key=lambda m: m.test_accuracy)
        return {
            "final_accuracy": self.last_accuracy,
            "best_accuracy": best.test_accuracy,
            "best_epoch": best.epoch,
        }

    def learning_curve(self) -> list[tuple]:
        """Epoch, loss and accuracy records, i.e. everything except timings."""
        return [(m.epoch, m.phase, m.train_loss, m.test_accuracy) for m in self.epochs]


def loss_and_output_grad(outputs, labels, loss_mode: str, anchor=None):
    """Loss and its gradient w.r.t. ``outputs``; ``anchor`` freezes the OAT anchor."""
    if loss_mode == "ce":
        return cross_entropy_loss(outputs, labels)
    if loss_mode == "oat":
        if anchor is None:
            anchor = oat.anchor_of_outputs(outputs)
        return oat.oat_loss_and_grad(oat.oat_targets(labels, anchor), outputs)
    raise ValueError(f"unknown loss mode {loss_mode!r}")


def train_epoch(net: Network, train: Dataset, state: OptimizerState, loss_mode: str,
                batch_size: int, seed: int, epoch: int) -> float:
    """One shuffled pass; returns the sample-weighted mean batch loss."""
    total = 0.0
    for batch in epoch_batches(train, batch_size, shuffle=True, seed=seed, epoch=epoch):
        out, tape = forward(net, batch.inputs)
        loss, grad = loss_and_output_grad(out, batch.labels, loss_mode)
        sgd_step(net, backward(net, tape, grad), state)
        total += loss * len(batch.indices)
    return total / len(train)


def predict(net: Network, test: Dataset, mode: str, eval_batch_size: int) -> list[int]:
    if mode not in EVAL_MODES:
        raise ContractError(f"unknown eval mode {mode!r}")
    if mode == "oat_single":
        eval_batch_size = 1
    preds: list[int] = []
    for batch in epoch_batches(test, eval_batch_size, shuffle=False):
        out, _ = forward(net, batch.inputs)
        preds += argmax_rows(out) if mode == "conventional" else oat.predict_batch(out)
    return preds


def evaluate(net: Network, test: Dataset, mode: str, eval_batch_size: int) -> tuple[float, float]:
    """Test accuracy and wall-clock seconds. Test batches follow dataset order."""
    if test is None or len(test) == 0:
        raise ContractError("empty test set")
    start = time.perf_counter()
    preds = np.asarray(predict(net, test, mode, eval_batch_size))
    correct = int(np.sum(preds == test.class_indices()))
    return correct / len(test), time.perf_counter() - start


def run_training(net: Network, train: Dataset, test: Dataset, cfg: TrainConfig,
                 progress=None) -> tuple[Network, History]:
    """Train ``net`` in place according to ``cfg``.

    In oat mode the first ``pretrain_epochs`` use cross-entropy; the optimizer
    velocity is reset when the objective switches. CE-phase epochs are always
    evaluated by plain argmax since the outputs are logits at that point.
    """
    if net.class_count != train.class_count or net.class_count != test.class_count:
        raise ContractError(
            f"network has {net.class_count} classes, datasets have {train.class_count}/{test.class_count}")
    history = History(config=asdict(cfg))
    state = OptimizerState.fresh(net, cfg.lr, cfg.momentum)
    for epoch in range(cfg.total_epochs):
        phase = cfg.phase(epoch)
        if phase == "oat" and epoch == cfg.pretrain_epochs and epoch > 0:
            state = OptimizerState.fresh(net, cfg.lr, cfg.momentum)
        loss_mode = "oat" if phase == "oat" else "ce"

        start = time.perf_counter()
        loss = train_epoch(net, train, state, loss_mode, cfg.batch_size, cfg.seed, epoch)
        train_seconds = time.perf_counter() - start

        eval_mode = cfg.eval_mode if phase == "oat" else "conventional"
        acc, eval_seconds = evaluate(net, test, eval_mode, cfg.eval_batch_size)
        metrics = EpochMetrics(epoch, phase, loss, acc, train_seconds, eval_seconds)
        history.epochs.append(metrics)
        if progress is not None:
            progress(metrics)
    return net, history


def _oracle_loss(outputs, labels, loss_mode: str, anchor):
    """Loss evaluated in the precision of ``outputs``, never rounded to a Python float."""
    if loss_mode == "ce":
        return -np.sum(labels * log_softmax_rows(outputs)) / outputs.shape[0]
    return np.mean((outputs - oat.oat_targets(labels, anchor)) ** 2)


def grad_check(net: Network, batch: Batch, loss_mode: str, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The analytic gradients come from the float64 network. The differences
    are taken on an extended-precision copy (``np.longdouble``), because in
    float64 their roundoff, about eps * loss / h, can exceed 1e-6 of a small
    gradient entry. For the OAT loss the anchor is computed once from the
    unperturbed outputs and held fixed, matching what the analytic path
    differentiates.
    """
    if not h > 0:
        raise ContractError(f"step h must be positive, got {h}")
    if net.dtype != np.float64:
        raise ContractError("gradient checks require a float64 network")
    x = batch.inputs.astype(np.float64)
    out, tape = forward(net, x)
    anchor = oat.anchor_of_outputs(out) if loss_mode == "oat" else None
    _, grad_out = loss_and_output_grad(out, batch.labels, loss_mode, anchor)
    analytic = backward(net, tape, grad_out)

    ext = net.astype(np.longdouble)
    x_ext = x.astype(np.longdouble)
    labels_ext = batch.labels.astype(np.longdouble)
    anchor_ext = None if anchor is None else oat.AnchorVector(anchor.probs.astype(np.longdouble))

    def objective():
        return _oracle_loss(forward(ext, x_ext)[0], labels_ext, loss_mode, anchor_ext)

    worst = 0.0
    for p, g in zip(ext.params, analytic):
        for name, w in p.items():
            flat, gflat = w.reshape(-1), g[name].reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                plus = objective()
                flat[j] = orig - h
                minus = objective()
                flat[j] = orig
                numeric = float((plus - minus) / (2 * np.longdouble(h)))
                a = float(gflat[j])
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
                worst = max(worst, err)
    return worst

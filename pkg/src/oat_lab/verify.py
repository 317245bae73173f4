"""Property checks run by ``oat-lab verify``.

Each check returns a short detail string and raises AssertionError on
failure. All randomness is seeded so the report is reproducible.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from . import nnet, oat, tensor
from .data import Batch, epoch_batches, synth_blobs
from .trainer import TrainConfig, evaluate, grad_check, run_training

CLASS_COUNTS = (2, 10, 101)


def _random_case(rng, dtype=np.float32):
    c = int(rng.choice(CLASS_COUNTS))
    b = int(rng.integers(1, 6))
    logits = rng.normal(scale=3.0, size=(b, c)).astype(dtype)
    labels = tensor.one_hot(rng.integers(0, c, size=b), c, dtype)
    return logits, labels


def check_softmax_simplex():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x, _ = _random_case(rng)
        s = tensor.softmax_rows(x)
        assert np.all(s > 0), "non-positive softmax entry"
        assert np.max(np.abs(s.sum(axis=1) - 1)) <= 1e-6, "rows do not sum to 1"
        shifted = tensor.softmax_rows(x + np.float32(rng.normal(scale=5)))
        assert np.max(np.abs(shifted - s)) <= 1e-6, "not shift invariant"
    return "200 cases"


def check_matmul_identity():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(7, 5)).astype(np.float32)
    assert np.array_equal(tensor.matmul(a, np.eye(5, dtype=np.float32)), a)
    return "bitwise"


def check_anchor_simplex():
    rng = np.random.default_rng(2)
    for _ in range(200):
        x, _ = _random_case(rng)
        a = oat.anchor_of_outputs(x).probs
        assert np.all(a > 0) and abs(float(a.sum()) - 1) <= 1e-6, "anchor off the simplex"
    return "200 cases"


def check_anchor_single_row():
    rng = np.random.default_rng(3)
    for _ in range(200):
        x, _ = _random_case(rng)
        row = x[:1]
        assert np.array_equal(oat.anchor_of_outputs(row).probs, tensor.softmax_rows(row)), \
            "single-row anchor differs from softmax of the row"
    return "200 cases"


def check_anchor_row_order():
    rng = np.random.default_rng(4)
    for _ in range(200):
        x, _ = _random_case(rng)
        perm = rng.permutation(len(x))
        diff = oat.anchor_of_outputs(x).probs - oat.anchor_of_outputs(x[perm]).probs
        assert np.max(np.abs(diff)) <= 1e-6, "anchor depends on row order"
    return "200 cases"


def check_off_class_targets():
    rng = np.random.default_rng(5)
    for _ in range(200):
        x, y = _random_case(rng)
        t = oat.oat_targets(y, oat.anchor_of_outputs(x))
        assert np.all(t[y == 0] == -1), "off-class target differs from -1"
        assert np.all(t[y == 1] >= 0), "true-class target negative"
    return "200 cases"


def check_round_trip():
    rng = np.random.default_rng(6)
    for _ in range(200):
        x, y = _random_case(rng)
        a = oat.anchor_of_outputs(x)
        back = oat.inverse_transform(a, oat.oat_targets(y, a))
        err = float(np.max(np.abs(back - y)))
        assert err <= 1e-5, f"reconstruction error {err:.3g}"
    return "200 cases"


def check_score_sum_identity():
    rng = np.random.default_rng(7)
    for _ in range(200):
        x, _ = _random_case(rng, np.float64)
        a = oat.anchor_of_outputs(x)
        preds = rng.normal(size=x.shape)
        scores = oat.inverse_transform(a, preds)
        expected = 1 + (preds * a.probs).sum(axis=1)
        assert np.max(np.abs(scores.sum(axis=1) - expected)) <= 1e-5, "score sum identity violated"
    return "200 cases"


def check_oat_mse_gradient():
    rng = np.random.default_rng(8)
    worst = 0.0
    h = 1e-3  # the loss is quadratic, so central differences are exact up to roundoff
    for _ in range(50):
        t = rng.normal(size=(3, 4))
        p = rng.normal(size=(3, 4))
        _, g = oat.oat_loss_and_grad(t, p)
        for idx in np.ndindex(p.shape):
            up, down = p.copy(), p.copy()
            up[idx] += h
            down[idx] -= h
            num = (oat.oat_loss_and_grad(t, up)[0] - oat.oat_loss_and_grad(t, down)[0]) / (2 * h)
            worst = max(worst, abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-12))
    assert worst < 1e-8, f"max relative error {worst:.3g}"
    return f"max relative error {worst:.2e}"


def _small_nets():
    yield "dense", [nnet.Dense(5, 6), nnet.ReLU(), nnet.Dense(6, 3)], (5,)
    yield "conv", [nnet.Conv2d(2, 3, 3), nnet.ReLU(), nnet.MaxPool2x2(), nnet.Flatten(),
                   nnet.Dense(12, 4), nnet.ReLU(), nnet.Dense(4, 3)], (2, 6, 6)


def check_gradients():
    rng = np.random.default_rng(9)
    parts = []
    for name, spec, shape in _small_nets():
        net = nnet.init_network(spec, 3, seed=11, input_shape=shape, dtype=np.float64)
        x = rng.normal(size=(4, *shape))
        y = tensor.one_hot(rng.integers(0, 3, size=4), 3, np.float64)
        for loss in ("ce", "oat"):
            err = grad_check(net, Batch(x, y, np.arange(4)), loss)
            assert err < 1e-6, f"{name}/{loss}: max relative error {err:.3g}"
            parts.append(f"{name}/{loss} ok")
    return ", ".join(parts)


def check_sgd_recurrence():
    net = nnet.init_network([nnet.Dense(1, 1)], 1, seed=0, dtype=np.float64)
    net.params[0]["W"][:] = 1.0
    state = nnet.OptimizerState.fresh(net, lr=0.1, momentum=0.9)
    grads = [{"W": np.ones((1, 1)), "b": np.zeros(1)}]
    nnet.sgd_step(net, grads, state)
    assert abs(net.params[0]["W"][0, 0] - 0.9) < 1e-12
    nnet.sgd_step(net, grads, state)
    assert abs(net.params[0]["W"][0, 0] - 0.71) < 1e-12
    return "two steps"


def check_checkpoint_round_trip():
    net = nnet.init_network(nnet.lightweight_cifar(), 10, seed=3, input_shape=(3, 32, 32))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "net.npz"
        nnet.save_network(net, path)
        loaded = nnet.load_network(path)
    assert loaded.layers == net.layers
    for p, q in zip(net.params, loaded.params):
        for k in p:
            assert p[k].dtype == q[k].dtype and np.array_equal(p[k], q[k]), "parameters changed"
    return "bitwise"


def check_batch_partition():
    train, _ = synth_blobs(3, 20, 2, 1.0, seed=0)
    for shuffle in (False, True):
        idx = np.concatenate([b.indices for b in epoch_batches(train, 7, shuffle, seed=1, epoch=2)])
        assert sorted(idx.tolist()) == list(range(len(train))), "batches do not partition the dataset"
    return "shuffled and ordered"


def _tiny_run(mode: str):
    train, test = synth_blobs(3, 30, 4, 1.0, seed=5)
    cfg = TrainConfig(mode=mode, total_epochs=4, pretrain_epochs=2, batch_size=8, seed=5)
    net = nnet.init_network(nnet.mlp(4, [8], 3), 3, seed=5)
    return run_training(net, train, test, cfg)


def check_training_determinism():
    for mode in ("conventional", "oat"):
        _, h1 = _tiny_run(mode)
        _, h2 = _tiny_run(mode)
        assert h1.learning_curve() == h2.learning_curve(), f"{mode} runs differ"
    return "conventional and oat"


def check_single_sample_mode():
    net, _ = _tiny_run("oat")
    _, test = synth_blobs(3, 30, 4, 1.0, seed=5)
    single, _ = evaluate(net, test, "oat_single", 32)
    batched, _ = evaluate(net, test, "oat_batched", 1)
    assert single == batched, f"oat_single {single} != oat_batched@1 {batched}"
    return "exact"


CHECKS = [
    ("softmax_simplex", check_softmax_simplex),
    ("matmul_identity", check_matmul_identity),
    ("anchor_simplex", check_anchor_simplex),
    ("anchor_single_row", check_anchor_single_row),
    ("anchor_row_order", check_anchor_row_order),
    ("off_class_targets", check_off_class_targets),
    ("round_trip", check_round_trip),
    ("score_sum_identity", check_score_sum_identity),
    ("oat_mse_gradient", check_oat_mse_gradient),
    ("gradient_check", check_gradients),
    ("sgd_recurrence", check_sgd_recurrence),
    ("checkpoint_round_trip", check_checkpoint_round_trip),
    ("batch_partition", check_batch_partition),
    ("training_determinism", check_training_determinism),
    ("single_sample_mode", check_single_sample_mode),
]


def run_all() -> list[tuple[str, bool, str]]:
    results = []
    for name, check in CHECKS:
        try:
            results.append((name, True, check()))
        except Exception as exc:  # a crashing check counts as a failure
            results.append((name, False, f"{type(exc).__name__}: {exc}"))
    return results

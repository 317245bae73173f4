import math

import numpy as np
import pytest

from oat_lab import nnet
from oat_lab.data import Batch, Dataset, synth_blobs
from oat_lab.errors import ConfigError, ContractError
from oat_lab.trainer import TrainConfig, evaluate, grad_check, predict, run_training


@pytest.fixture(scope="module")
def blobs():
    return synth_blobs(3, 30, 4, 1.0, seed=5)


def _mlp(train, seed=5, dtype=np.float32):
    return nnet.init_network(nnet.mlp(train.sample_shape[0], [8], train.class_count),
                             train.class_count, seed=seed, dtype=dtype)


def test_config_defaults_and_validation():
    cfg = TrainConfig()
    assert (cfg.total_epochs, cfg.pretrain_epochs, cfg.batch_size, cfg.lr, cfg.momentum) == (100, 10, 32, 0.001, 0.9)
    assert cfg.eval_batch_size == 32 and cfg.eval_mode == "conventional"
    assert TrainConfig(mode="oat").eval_mode == "oat_batched"
    for bad in [dict(lr=0), dict(momentum=1.0), dict(batch_size=0), dict(mode="oat", pretrain_epochs=5, total_epochs=4),
                dict(pretrain_epochs=-1), dict(eval_mode="other"), dict(mode="x")]:
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_phase_schedule():
    cfg = TrainConfig(mode="oat", total_epochs=100, pretrain_epochs=10)
    phases = [cfg.phase(e) for e in range(100)]
    assert phases == ["pretrain_ce"] * 10 + ["oat"] * 90
    assert {TrainConfig().phase(e) for e in range(100)} == {"ce"}


def test_history_phases_and_length(blobs):
    train, test = blobs
    cfg = TrainConfig(mode="oat", total_epochs=4, pretrain_epochs=1, batch_size=8, seed=5)
    _, hist = run_training(_mlp(train), train, test, cfg)
    assert [m.phase for m in hist.epochs] == ["pretrain_ce", "oat", "oat", "oat"]
    assert all(0 <= m.test_accuracy <= 1 and m.epoch_train_seconds >= 0 and m.eval_seconds >= 0
               for m in hist.epochs)
    assert hist.summary()["final_accuracy"] == hist.epochs[-1].test_accuracy

    cfg = TrainConfig(mode="oat", total_epochs=2, pretrain_epochs=0, batch_size=8)
    _, hist = run_training(_mlp(train), train, test, cfg)
    assert [m.phase for m in hist.epochs] == ["oat", "oat"]


def test_class_count_mismatch(blobs):
    train, test = blobs
    net = nnet.init_network(nnet.mlp(4, [8], 4), 4, seed=0)
    with pytest.raises(ContractError):
        run_training(net, train, test, TrainConfig(total_epochs=1))


def test_one_oat_step_by_hand():
    """One OAT update of a Dense(1, 2) net on two samples, worked out in scalars."""
    w, b = [0.3, -0.2], [0.1, 0.05]
    xs, ys = [1.0, -2.0], [0, 1]
    lr, momentum = 0.1, 0.9

    outs = [[x * w[k] + b[k] for k in range(2)] for x in xs]
    centre = [(outs[0][k] + outs[1][k]) / 2 for k in range(2)]
    z = sum(math.exp(c) for c in centre)
    anchor = [math.exp(c) / z for c in centre]
    targets = [[(1.0 if ys[i] == k else 0.0) / anchor[k] - 1 for k in range(2)] for i in range(2)]
    g = [[2 * (outs[i][k] - targets[i][k]) / 4 for k in range(2)] for i in range(2)]
    # first step from zero velocity: v = -lr*grad
    w_new = [w[k] - lr * sum(xs[i] * g[i][k] for i in range(2)) for k in range(2)]
    b_new = [b[k] - lr * sum(g[i][k] for i in range(2)) for k in range(2)]

    net = nnet.init_network([nnet.Dense(1, 2)], 2, seed=0, dtype=np.float64)
    net.params[0]["W"][:] = [w]
    net.params[0]["b"][:] = b
    data = Dataset(np.array([[x] for x in xs]), np.eye(2)[ys], 2)
    cfg = TrainConfig(mode="oat", total_epochs=1, pretrain_epochs=0, batch_size=2, lr=lr, momentum=momentum)
    run_training(net, data, data, cfg)
    assert np.allclose(net.params[0]["W"][0], w_new, rtol=0, atol=1e-12)
    assert np.allclose(net.params[0]["b"], b_new, rtol=0, atol=1e-12)


def test_velocity_reset_at_switch(blobs, monkeypatch):
    from oat_lab import trainer

    train, test = blobs
    created = []
    original = nnet.OptimizerState.fresh.__func__

    def spy(cls, net, lr, momentum):
        created.append(net.version)
        return original(cls, net, lr, momentum)

    monkeypatch.setattr(trainer.OptimizerState, "fresh", classmethod(spy))
    cfg = TrainConfig(mode="oat", total_epochs=3, pretrain_epochs=2, batch_size=30)
    run_training(_mlp(train), train, test, cfg)
    # one fresh state at the start, one after the two CE epochs (three batches each)
    assert created == [0, 6]


def _constant_net(c, d):
    net = nnet.init_network(nnet.mlp(d, [4], c), c, seed=0)
    net.params[1]["W"][:] = 0  # params[0] belongs to the leading Flatten
    return net


@pytest.mark.parametrize("mode", ["conventional", "oat_batched", "oat_single"])
def test_constant_net_scores_one_over_c(mode):
    train, test = synth_blobs(4, 10, 3, 1.0, seed=0)
    acc, seconds = evaluate(_constant_net(4, 3), test, mode, 3)
    assert acc == pytest.approx(1 / 4) and seconds >= 0


def test_evaluate_matches_brute_force_and_does_not_mutate(blobs):
    train, test = blobs
    net = _mlp(train)
    run_training(net, train, test, TrainConfig(mode="oat", total_epochs=3, pretrain_epochs=1, batch_size=8))
    before = net.copy()
    for mode in ("conventional", "oat_batched", "oat_single"):
        acc, _ = evaluate(net, test, mode, 7)
        preds = predict(net, test, mode, 7)
        assert acc == sum(p == t for p, t in zip(preds, test.class_indices())) / len(test)
    assert all(np.array_equal(p[k], q[k]) for p, q in zip(net.params, before.params) for k in p)
    assert evaluate(net, test, "oat_single", 32)[0] == evaluate(net, test, "oat_batched", 1)[0]


def test_memorized_tiny_set_scores_perfectly():
    tiny, _ = synth_blobs(2, 12, 2, 1.0, seed=3)
    assert len(tiny) == 20
    net = nnet.init_network(nnet.mlp(2, [16], 2), 2, seed=0)
    cfg = TrainConfig(mode="oat", total_epochs=2000, pretrain_epochs=0, batch_size=20, lr=0.01)
    _, hist = run_training(net, tiny, tiny, cfg)
    assert hist.epochs[-1].train_loss < 1e-3
    assert evaluate(net, tiny, "oat_batched", len(tiny))[0] == 1.0


def test_empty_test_set_is_rejected(blobs):
    train, _ = blobs
    with pytest.raises(ContractError):
        evaluate(_mlp(train), None, "conventional", 4)


def test_grad_check_examples(blobs, random_small_network):
    train, _ = blobs
    x = train.inputs[:4].astype(np.float64)
    batch = Batch(x, train.labels[:4], np.arange(4))
    linear = nnet.init_network([nnet.Dense(4, 3)], 3, seed=0, dtype=np.float64)
    assert grad_check(linear, batch, "oat") < 1e-6
    conv, cbatch = random_small_network(1)
    assert grad_check(conv, cbatch, "ce") < 1e-6
    with pytest.raises(ContractError):
        grad_check(linear, batch, "ce", h=0)
    with pytest.raises(ContractError):
        grad_check(linear.astype(np.float32), batch, "ce")


def test_runs_are_deterministic(blobs):
    train, test = blobs
    curves = []
    for _ in range(2):
        cfg = TrainConfig(mode="oat", total_epochs=3, pretrain_epochs=1, batch_size=8, seed=2)
        curves.append(run_training(_mlp(train, seed=2), train, test, cfg)[1].learning_curve())
    assert curves[0] == curves[1]

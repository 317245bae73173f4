import os

import numpy as np
import pytest

from oat_lab.data import load_mnist_idx

_CRITERIA: list[str] = []


def record_criterion(line: str) -> None:
    _CRITERIA.append(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """IDX files for the desk-scale MNIST subset.

    Built from full MNIST when OAT_MNIST_DIR points at the standard IDX files,
    otherwise from the 5,000-image sample that ships with mlxtend.
    """
    from oat_lab.mnist_subset import write_mnist_subset

    source = os.environ.get("OAT_MNIST_DIR")
    if source is None:
        pytest.importorskip("mlxtend")
    out = tmp_path_factory.mktemp("mnist")
    write_mnist_subset(out, source)
    return out


@pytest.fixture(scope="session")
def mnist(mnist_dir):
    from oat_lab.mnist_subset import FILES

    train = load_mnist_idx(mnist_dir / FILES["train_images"], mnist_dir / FILES["train_labels"])
    test = load_mnist_idx(mnist_dir / FILES["test_images"], mnist_dir / FILES["test_labels"],
                          split="test", stats=train.normalization_stats)
    return train, test


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _random_small_network(seed: int):
    """A float64 network of at most a few hundred parameters plus a labelled batch.

    Even seeds give dense-only nets, odd seeds conv+dense nets.
    """
    from oat_lab import nnet
    from oat_lab.data import Batch
    from oat_lab.tensor import one_hot

    rng = np.random.default_rng(seed)
    c = int(rng.integers(2, 5))
    if seed % 2 == 0:
        d, h = int(rng.integers(2, 7)), int(rng.integers(2, 9))
        layers = [nnet.Dense(d, h), nnet.ReLU(), nnet.Dense(h, c)]
        if rng.random() < 0.5:
            layers = [nnet.Dense(d, h), nnet.ReLU(), nnet.Dense(h, h), nnet.ReLU(), nnet.Dense(h, c)]
        shape = (d,)
    else:
        ch, k = int(rng.integers(1, 3)), int(rng.integers(2, 4))
        out_ch = int(rng.integers(1, 4))
        side = 2 * int(rng.integers(2, 4)) + k - 1  # even conv output so pooling tiles exactly
        pooled = (side - k + 1) // 2
        flat = out_ch * pooled * pooled
        layers = [nnet.Conv2d(ch, out_ch, k), nnet.ReLU(), nnet.MaxPool2x2(), nnet.Flatten(),
                  nnet.Dense(flat, c)]
        shape = (ch, side, side)
    net = nnet.init_network(layers, c, seed=seed, input_shape=shape, dtype=np.float64)
    b = int(rng.integers(2, 6))
    x = rng.normal(size=(b, *shape))
    while _near_kink(net, x):
        x = rng.normal(size=(b, *shape))
    y = one_hot(rng.integers(0, c, size=b), c, np.float64)
    return net, Batch(x, y, np.arange(b))


def _near_kink(net, x, margin=1e-3) -> bool:
    """True when a ReLU input or a max-pool tie lies within ``margin`` of switching.

    Central differences only approximate the gradient where the loss is smooth
    across the step, so such inputs are redrawn rather than checked.
    """
    from oat_lab import nnet

    for k, layer in enumerate(net.layers):
        if not isinstance(layer, (nnet.ReLU, nnet.MaxPool2x2)) or k == 0:
            continue
        prefix = nnet.Network(net.layers[:k], net.params[:k], net.class_count)
        z = nnet.forward(prefix, x)[0]
        if isinstance(layer, nnet.ReLU) and np.abs(z).min() < margin:
            return True
        if isinstance(layer, nnet.MaxPool2x2):
            n, ch, h, w = z.shape
            windows = z.reshape(n, ch, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(-1, 4)
            top = np.sort(windows, axis=1)
            live = top[:, -1] > 0
            if np.any(top[live, -1] - top[live, -2] < margin):
                return True
    return False


@pytest.fixture(scope="session")
def random_small_network():
    return _random_small_network

"""Layers, initialization, forward/backward passes, losses and SGD with momentum.

Everything operates on numpy arrays. Parameters live in ``Network.params`` as
one dict per layer (empty for parameterless layers); gradients and optimizer
velocities use the same layout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, ShapeError
from .tensor import DEFAULT_DTYPE, is_one_hot, log_softmax_rows, softmax_rows


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Conv2d:
    """Stride-1, valid-padding convolution with a square kernel."""

    in_channels: int
    out_channels: int
    kernel: int


@dataclass(frozen=True)
class MaxPool2x2:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[Dense, ReLU, Conv2d, MaxPool2x2, Flatten]
GradientSet = list  # list[dict[str, np.ndarray]], congruent with Network.params

_KINDS = {cls.__name__: cls for cls in (Dense, ReLU, Conv2d, MaxPool2x2, Flatten)}


def lightweight_cifar(class_count: int = 10) -> list[LayerSpec]:
    """Two 5x5 conv layers (6 and 16 kernels) and a 128-64-C dense head."""
    return [
        Conv2d(3, 6, 5), ReLU(), MaxPool2x2(),
        Conv2d(6, 16, 5), ReLU(), MaxPool2x2(),
        Flatten(),
        Dense(16 * 5 * 5, 128), ReLU(),
        Dense(128, 64), ReLU(),
        Dense(64, class_count),
    ]


def mlp(in_features: int, hidden: list[int], class_count: int) -> list[LayerSpec]:
    layers: list[LayerSpec] = [Flatten()]
    prev = in_features
    for width in hidden:
        layers += [Dense(prev, width), ReLU()]
        prev = width
    layers.append(Dense(prev, class_count))
    return layers


def _next_shape(i: int, layer: LayerSpec, shape):
    """Per-sample output shape of ``layer``. ``shape`` may be None or contain
    None entries when the input size is not known yet."""

    def fail(expected):
        raise ShapeError(f"layer {i} ({layer}) expects input {expected}, previous layer produces {shape}")

    if isinstance(layer, Dense):
        if shape is not None and (len(shape) != 1 or shape[0] not in (None, layer.in_features)):
            fail((layer.in_features,))
        return (layer.out_features,)
    if isinstance(layer, ReLU):
        return shape
    if isinstance(layer, Flatten):
        if shape is None or any(d is None for d in shape):
            return None
        return (int(np.prod(shape)),)
    if isinstance(layer, Conv2d):
        if shape is None:
            shape = (layer.in_channels, None, None)
        if len(shape) != 3 or shape[0] != layer.in_channels:
            fail((layer.in_channels, "h", "w"))
        h, w = shape[1:]
        k = layer.kernel
        if (h is not None and h < k) or (w is not None and w < k):
            fail((layer.in_channels, f">={k}", f">={k}"))
        return (layer.out_channels,
                None if h is None else h - k + 1,
                None if w is None else w - k + 1)
    if isinstance(layer, MaxPool2x2):
        if shape is None or len(shape) != 3:
            fail(("c", "h", "w"))
        c, h, w = shape
        return (c, None if h is None else h // 2, None if w is None else w // 2)
    raise TypeError(f"unsupported layer {layer!r}")


def infer_shapes(layers: list[LayerSpec], input_shape=None) -> list:
    """Per-sample shapes after every layer; raises ShapeError at the first
    boundary that does not chain."""
    shape = tuple(input_shape) if input_shape is not None else None
    shapes = []
    for i, layer in enumerate(layers):
        shape = _next_shape(i, layer, shape)
        shapes.append(shape)
    return shapes


@dataclass
class Network:
    layers: list
    params: list
    class_count: int
    input_shape: tuple | None = None
    # Bumped on every parameter update so stale tapes can be detected.
    version: int = 0

    @property
    def dtype(self):
        for p in self.params:
            for v in p.values():
                return v.dtype
        return np.dtype(DEFAULT_DTYPE)

    def parameter_count(self) -> int:
        return sum(v.size for p in self.params for v in p.values())

    def copy(self) -> "Network":
        return Network(
            layers=list(self.layers),
            params=[{k: v.copy() for k, v in p.items()} for p in self.params],
            class_count=self.class_count,
            input_shape=self.input_shape,
        )

    def astype(self, dtype) -> "Network":
        net = self.copy()
        net.params = [{k: v.astype(dtype) for k, v in p.items()} for p in net.params]
        return net


INIT_SCHEMES = ("glorot", "fan_in")


def init_network(spec: list[LayerSpec], class_count: int, seed: int,
                 input_shape=None, dtype=DEFAULT_DTYPE, init: str = "fan_in") -> Network:
    """Random parameters fully determined by ``seed``.

    ``fan_in`` (default): weights and biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    the stock PyTorch layer initialization.
    ``glorot``: weights U(-s, s) with s = sqrt(6 / (fan_in + fan_out)), zero biases.
    Anchor-based training is noticeably less stable at the switch from
    cross-entropy pre-training under ``glorot``.
    """
    if init not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {init!r}; expected one of {INIT_SCHEMES}")
    layers = list(spec)
    if not layers:
        raise ShapeError("empty layer spec")
    infer_shapes(layers, input_shape)
    last = layers[-1]
    if not isinstance(last, Dense) or last.out_features != class_count:
        raise ShapeError(f"final layer must be Dense with {class_count} outputs, got {last}")

    rng = np.random.default_rng(seed)
    params = []
    for layer in layers:
        if isinstance(layer, Dense):
            fan_in, fan_out = layer.in_features, layer.out_features
            wshape = (fan_in, fan_out)
            bsize = fan_out
        elif isinstance(layer, Conv2d):
            area = layer.kernel * layer.kernel
            fan_in, fan_out = layer.in_channels * area, layer.out_channels * area
            wshape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
            bsize = layer.out_channels
        else:
            params.append({})
            continue
        if init == "glorot":
            s = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-s, s, size=wshape)
            b = np.zeros(bsize)
        else:
            s = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-s, s, size=wshape)
            b = rng.uniform(-s, s, size=bsize)
        params.append({"W": w.astype(dtype), "b": b.astype(dtype)})
    shape = tuple(input_shape) if input_shape is not None else None
    return Network(layers=layers, params=params, class_count=class_count, input_shape=shape)


@dataclass
class Tape:
    network_id: int
    version: int
    caches: list = field(default_factory=list)


def _conv_forward(x, W, b):
    n, c, h, w = x.shape
    o, _, k, _ = W.shape
    ho, wo = h - k + 1, w - k + 1
    windows = sliding_window_view(x, (k, k), axis=(2, 3))  # n, c, ho, wo, k, k
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    out = cols @ W.reshape(o, -1).T + b
    return out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, W, cols, x_shape):
    n, c, h, w = x_shape
    o, _, k, _ = W.shape
    ho, wo = h - k + 1, w - k + 1
    d = dout.transpose(0, 2, 3, 1).reshape(-1, o)
    dW = (d.T @ cols).reshape(W.shape)
    db = d.sum(axis=0)
    dcols = (d @ W.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx, dW, db


def _pool_forward(x):
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    cropped = x[:, :, :2 * h2, :2 * w2]
    blocks = cropped.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = blocks.argmax(axis=-1)[..., None]
    return np.take_along_axis(blocks, idx, axis=-1)[..., 0], idx


def _pool_backward(dout, idx, x_shape):
    n, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    dblocks = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(dblocks, idx, dout[..., None], axis=-1)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :, :2 * h2, :2 * w2] = (
        dblocks.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    )
    return dx


def forward(net: Network, inputs: np.ndarray) -> tuple[np.ndarray, Tape]:
    """Raw output logits for a batch plus the tape needed by ``backward``."""
    x = np.asarray(inputs)
    if net.input_shape is not None and tuple(x.shape[1:]) != net.input_shape:
        raise ShapeError(f"network expects samples of shape {net.input_shape}, got {tuple(x.shape[1:])}")
    x = x.astype(net.dtype, copy=False)
    tape = Tape(network_id=id(net), version=net.version)
    for i, (layer, p) in enumerate(zip(net.layers, net.params)):
        if isinstance(layer, Dense):
            if x.ndim != 2 or x.shape[1] != layer.in_features:
                raise ShapeError(f"layer {i} ({layer}) got input of shape {x.shape}")
            tape.caches.append(x)
            x = x @ p["W"] + p["b"]
        elif isinstance(layer, ReLU):
            mask = x > 0
            tape.caches.append(mask)
            x = x * mask
        elif isinstance(layer, Conv2d):
            if x.ndim != 4 or x.shape[1] != layer.in_channels:
                raise ShapeError(f"layer {i} ({layer}) got input of shape {x.shape}")
            shape = x.shape
            x, cols = _conv_forward(x, p["W"], p["b"])
            tape.caches.append((cols, shape))
        elif isinstance(layer, MaxPool2x2):
            if x.ndim != 4:
                raise ShapeError(f"layer {i} ({layer}) got input of shape {x.shape}")
            shape = x.shape
            x, idx = _pool_forward(x)
            tape.caches.append((idx, shape))
        elif isinstance(layer, Flatten):
            tape.caches.append(x.shape)
            x = x.reshape(x.shape[0], -1)
        else:
            raise TypeError(f"unsupported layer {layer!r}")
    return x, tape


def backward(net: Network, tape: Tape, grad_output: np.ndarray) -> GradientSet:
    """Exact gradients of a scalar loss given its gradient w.r.t. the output."""
    if tape.network_id != id(net) or tape.version != net.version or len(tape.caches) != len(net.layers):
        raise ContractError("tape does not belong to the current state of this network")
    g = np.asarray(grad_output, dtype=net.dtype)
    grads: GradientSet = [{} for _ in net.layers]
    for i in range(len(net.layers) - 1, -1, -1):
        layer, p, cache = net.layers[i], net.params[i], tape.caches[i]
        if isinstance(layer, Dense):
            grads[i] = {"W": cache.T @ g, "b": g.sum(axis=0)}
            if i > 0:
                g = g @ p["W"].T
        elif isinstance(layer, ReLU):
            g = g * cache
        elif isinstance(layer, Conv2d):
            cols, shape = cache
            g, dW, db = _conv_backward(g, p["W"], cols, shape)
            grads[i] = {"W": dW, "b": db}
        elif isinstance(layer, MaxPool2x2):
            idx, shape = cache
            g = _pool_backward(g, idx, shape)
        elif isinstance(layer, Flatten):
            g = g.reshape(cache)
    return grads


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.shape != labels.shape:
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} differ")
    if not is_one_hot(labels):
        raise ContractError("labels must be one-hot rows")
    b = logits.shape[0]
    labels = labels.astype(logits.dtype, copy=False)
    loss = -float(np.sum(labels * log_softmax_rows(logits))) / b
    grad = (softmax_rows(logits) - labels) / logits.dtype.type(b)
    return loss, grad


@dataclass
class OptimizerState:
    velocity: list
    lr: float
    momentum: float

    @classmethod
    def fresh(cls, net: Network, lr: float, momentum: float) -> "OptimizerState":
        if lr <= 0:
            raise ContractError(f"lr must be positive, got {lr}")
        if not 0 <= momentum < 1:
            raise ContractError(f"momentum must lie in [0, 1), got {momentum}")
        velocity = [{k: np.zeros_like(v) for k, v in p.items()} for p in net.params]
        return cls(velocity=velocity, lr=lr, momentum=momentum)


def sgd_step(net: Network, grads: GradientSet, state: OptimizerState) -> tuple[Network, OptimizerState]:
    """Heavy-ball update ``v = momentum*v - lr*g; w = w + v``, in place."""
    if len(grads) != len(net.params) or len(state.velocity) != len(net.params):
        raise ShapeError("gradient/velocity layout does not match the network")
    for p, g, v in zip(net.params, grads, state.velocity):
        for name, w in p.items():
            if g[name].shape != w.shape or v[name].shape != w.shape:
                raise ShapeError(f"{name}: parameter {w.shape}, gradient {g[name].shape}, velocity {v[name].shape}")
            vel = v[name]
            vel *= state.momentum
            vel -= state.lr * g[name]
            w += vel
    net.version += 1
    return net, state


# Checkpoints -----------------------------------------------------------------

CHECKPOINT_VERSION = 1


def _layer_to_dict(layer: LayerSpec) -> dict:
    return {"kind": type(layer).__name__, **layer.__dict__}


def _layer_from_dict(d: dict) -> LayerSpec:
    d = dict(d)
    return _KINDS[d.pop("kind")](**d)


def save_network(net: Network, path) -> None:
    meta = {
        "format": "oat-lab-network",
        "version": CHECKPOINT_VERSION,
        "class_count": net.class_count,
        "input_shape": list(net.input_shape) if net.input_shape is not None else None,
        "layers": [_layer_to_dict(layer) for layer in net.layers],
    }
    arrays = {f"p{i}_{name}": v for i, p in enumerate(net.params) for name, v in p.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_network(path) -> Network:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != "oat-lab-network" or meta.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint header {meta.get('format')!r} v{meta.get('version')}")
        layers = [_layer_from_dict(d) for d in meta["layers"]]
        params = []
        for i, layer in enumerate(layers):
            names = ("W", "b") if isinstance(layer, (Dense, Conv2d)) else ()
            params.append({n: data[f"p{i}_{n}"].copy() for n in names})
    shape = tuple(meta["input_shape"]) if meta["input_shape"] is not None else None
    return Network(layers=layers, params=params, class_count=meta["class_count"], input_shape=shape)

"""Trainable networks as explicit parameter dictionaries plus forward/backward.

Three architectures are provided:

``mlp``
    784 -> 500 (ReLU) -> 10, for MNIST.
``mnist_cnn``
    conv 1->10 5x5, ReLU, pool / conv 10->20 5x5, ReLU, pool / fc 320->50, ReLU,
    dropout / fc 50->10.
``cifar_cnn``
    conv 3->6 5x5, ReLU, pool / conv 6->16 5x5, ReLU, pool / fc 400->120, ReLU /
    fc 120->84, ReLU / fc 84->10.

Convolutions are valid with stride 1 and pools are 2x2 with stride 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, InternalError

MODEL_KINDS = ("mlp", "mnist_cnn", "cifar_cnn")
INPUT_SHAPES = {
    "mlp": (1, 28, 28),
    "mnist_cnn": (1, 28, 28),
    "cifar_cnn": (3, 32, 32),
}
N_CLASSES = 10
MNIST_CNN_DROPOUT = 0.5

# name -> shape, in initialization order
_LAYOUTS: dict[str, list[tuple[str, tuple[int, ...]]]] = {
    "mlp": [
        ("W1", (784, 500)), ("b1", (500,)),
        ("W2", (500, 10)), ("b2", (10,)),
    ],
    "mnist_cnn": [
        ("conv1_w", (10, 1, 5, 5)), ("conv1_b", (10,)),
        ("conv2_w", (20, 10, 5, 5)), ("conv2_b", (20,)),
        ("fc1_w", (320, 50)), ("fc1_b", (50,)),
        ("fc2_w", (50, 10)), ("fc2_b", (10,)),
    ],
    "cifar_cnn": [
        ("conv1_w", (6, 3, 5, 5)), ("conv1_b", (6,)),
        ("conv2_w", (16, 6, 5, 5)), ("conv2_b", (16,)),
        ("fc1_w", (400, 120)), ("fc1_b", (120,)),
        ("fc2_w", (120, 84)), ("fc2_b", (84,)),
        ("fc3_w", (84, 10)), ("fc3_b", (10,)),
    ],
}


def param_layout(kind: str) -> list[tuple[str, tuple[int, ...]]]:
    if kind not in _LAYOUTS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return list(_LAYOUTS[kind])


def _fans(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 2:
        return shape[0], shape[1]
    out_c, in_c, kh, kw = shape
    return in_c * kh * kw, out_c * kh * kw


@dataclass
class Cache:
    """Intermediate values from ``forward`` needed by ``backward``."""

    kind: str
    owner: int
    values: dict = field(default_factory=dict)


class Model:
    """Base class: a named parameter bundle with forward/backward passes."""

    kind: str = ""

    def __init__(self, params: dict[str, np.ndarray]):
        expected = param_layout(self.kind)
        if [name for name, _ in expected] != list(params):
            raise ConfigError(f"{self.kind}: parameter names {list(params)} do not match layout")
        for name, shape in expected:
            if params[name].shape != shape:
                raise DimensionError(f"{self.kind}.{name}: shape {params[name].shape}, expected {shape}")
        self.params = {name: T.as_tensor(p) for name, p in params.items()}

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = T.as_tensor(x)
        want = INPUT_SHAPES[self.kind]
        if x.ndim != 4 or x.shape[1:] != want:
            raise DimensionError(f"{self.kind}: expected input of shape (N, {', '.join(map(str, want))}), got {x.shape}")
        return x

    def _new_cache(self) -> Cache:
        return Cache(kind=self.kind, owner=id(self))

    def _check_cache(self, cache: Cache) -> dict:
        if not isinstance(cache, Cache) or cache.kind != self.kind or cache.owner != id(self):
            raise InternalError(f"cache does not belong to this {self.kind} model")
        return cache.values

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, cache, grad_logits):
        raise NotImplementedError

    def copy(self) -> "Model":
        return type(self)({k: v.copy() for k, v in self.params.items()})


def _dense(x, w, b):
    return T.matmul(x, w) + b


def _dense_backward(x, w, g):
    """Return (dx, dw, db) for y = x @ w + b."""
    dw = T.matmul(np.ascontiguousarray(x.T), g)
    db = g.sum(axis=0)
    dx = T.matmul(g, np.ascontiguousarray(w.T))
    return dx, dw, db


class MlpModel(Model):
    kind = "mlp"

    def forward(self, x, training=False, rng=None):
        p = self.params
        x = self._check_input(x).reshape(len(x), -1)
        z1 = _dense(x, p["W1"], p["b1"])
        h1 = T.relu_forward(z1)
        logits = _dense(h1, p["W2"], p["b2"])
        cache = self._new_cache()
        cache.values.update(x=x, z1=z1, h1=h1)
        return logits, cache

    def backward(self, cache, grad_logits):
        c = self._check_cache(cache)
        p = self.params
        g = T.as_tensor(grad_logits)
        dh1, dW2, db2 = _dense_backward(c["h1"], p["W2"], g)
        dz1 = T.relu_backward(c["z1"], dh1)
        dW1 = T.matmul(np.ascontiguousarray(c["x"].T), dz1)
        db1 = dz1.sum(axis=0)
        return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


class _ConvNet(Model):
    """conv/ReLU/pool blocks followed by a stack of dense layers."""

    n_conv = 2
    n_fc = 2
    dropout_after: str | None = None
    dropout_rate = 0.0

    def forward(self, x, training=False, rng=None):
        p = self.params
        h = self._check_input(x)
        cache = self._new_cache()
        v = cache.values
        for i in range(1, self.n_conv + 1):
            w, b = p[f"conv{i}_w"], p[f"conv{i}_b"]
            v[f"conv{i}_in"] = h
            z, v[f"conv{i}_cols"] = T.conv2d_forward(h, w, b, return_cols=True)
            v[f"conv{i}_z"] = z
            a = T.relu_forward(z)
            h, v[f"pool{i}_idx"] = T.maxpool2d(a)
        v["flat_shape"] = h.shape
        h = h.reshape(len(h), -1)
        for i in range(1, self.n_fc + 1):
            w, b = p[f"fc{i}_w"], p[f"fc{i}_b"]
            v[f"fc{i}_in"] = h
            h = _dense(h, w, b)
            if i < self.n_fc:
                v[f"fc{i}_z"] = h
                h = T.relu_forward(h)
                if self.dropout_after == f"fc{i}":
                    if training and rng is None:
                        raise ConfigError(f"{self.kind}: training-mode forward needs an rng for dropout")
                    h, v["dropout_mask"] = T.dropout(h, self.dropout_rate, rng, training)
        return h, cache

    def backward(self, cache, grad_logits):
        v = self._check_cache(cache)
        p = self.params
        grads = {}
        g = T.as_tensor(grad_logits)
        for i in range(self.n_fc, 0, -1):
            if i < self.n_fc:
                if self.dropout_after == f"fc{i}":
                    g = T.dropout_backward(g, v["dropout_mask"])
                g = T.relu_backward(v[f"fc{i}_z"], g)
            g, grads[f"fc{i}_w"], grads[f"fc{i}_b"] = _dense_backward(v[f"fc{i}_in"], p[f"fc{i}_w"], g)
        g = g.reshape(v["flat_shape"])
        for i in range(self.n_conv, 0, -1):
            z = v[f"conv{i}_z"]
            g = T.maxpool2d_backward(g, v[f"pool{i}_idx"], z.shape)
            g = T.relu_backward(z, g)
            g, grads[f"conv{i}_w"], grads[f"conv{i}_b"] = T.conv2d_backward(
                v[f"conv{i}_in"], p[f"conv{i}_w"], g, cols=v[f"conv{i}_cols"], need_dx=i > 1)
        return {name: grads[name] for name in p}


class MnistCnnModel(_ConvNet):
    kind = "mnist_cnn"
    n_fc = 2
    dropout_after = "fc1"
    dropout_rate = MNIST_CNN_DROPOUT


class CifarCnnModel(_ConvNet):
    kind = "cifar_cnn"
    n_fc = 3


_CLASSES = {"mlp": MlpModel, "mnist_cnn": MnistCnnModel, "cifar_cnn": CifarCnnModel}


def init_model(kind: str, rng: np.random.Generator) -> Model:
    """Glorot-uniform weights, zero biases, drawn in layout order from ``rng``."""
    params = {}
    for name, shape in param_layout(kind):
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            fan_in, fan_out = _fans(shape)
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return _CLASSES[kind](params)


def zeros_model(kind: str) -> Model:
    return _CLASSES[kind]({name: np.zeros(shape) for name, shape in param_layout(kind)})


def forward(model: Model, batch, training=False, rng=None):
    """Logits ``(N, 10)`` and a cache for :func:`backward`."""
    return model.forward(batch, training=training, rng=rng)


def backward(model: Model, cache: Cache, grad_logits) -> dict[str, np.ndarray]:
    """Parameter gradients, one array per parameter with the same shape."""
    return model.backward(cache, grad_logits)


def predict(model: Model, batch, chunk: int = 500) -> np.ndarray:
    """Eval-mode class predictions (argmax, lowest index wins ties)."""
    batch = np.asarray(batch)
    out = np.empty(len(batch), dtype=np.int64)
    for start in range(0, len(batch), chunk):
        logits, _ = model.forward(batch[start:start + chunk], training=False)
        out[start:start + chunk] = T.argmax_rows(logits)
    return out

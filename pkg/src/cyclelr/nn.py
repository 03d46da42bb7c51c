"""A small dense network with softmax cross-entropy and manual backprop.

All trainable values live in one flat float64 vector ``Mlp.params``; every
layer holds reshaped views into it, and gradients land in the matching views
of ``Mlp.grads``. Optimizers therefore see a single vector.

Layer order for a spec with hidden sizes ``[h1, h2]``::

    dense(d, h1) [batchnorm(h1)] act  dense(h1, h2) [batchnorm(h2)] act  dense(h2, k)
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "tanh")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    hidden: tuple[int, ...] = (32, 32)
    activation: str = "relu"
    batchnorm: bool = False
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ModelError("hidden layer sizes must be positive")
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"unknown activation {self.activation!r}; expected one of {', '.join(ACTIVATIONS)}")
        if not self.bn_eps > 0:
            raise ModelError("bn_eps must be positive")
        if not 0 <= self.bn_momentum < 1:
            raise ModelError("bn_momentum must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        for key in d:
            if key not in cls.__dataclass_fields__:
                raise ModelError(f"unknown model key {key!r}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {"hidden": list(self.hidden), "activation": self.activation,
                "batchnorm": self.batchnorm, "bn_eps": self.bn_eps,
                "bn_momentum": self.bn_momentum}


class Dense:
    def __init__(self, n_in, n_out):
        self.n_in, self.n_out = n_in, n_out
        self.size = n_out * n_in + n_out

    def bind(self, params, grads):
        k = self.n_out * self.n_in
        self.W = params[:k].reshape(self.n_out, self.n_in)
        self.b = params[k:]
        self.dW = grads[:k].reshape(self.n_out, self.n_in)
        self.db = grads[k:]

    def forward(self, x, train, update_stats):
        self._x = x
        return x @ self.W.T + self.b

    def backward(self, dout):
        self.dW[...] = dout.T @ self._x
        self.db[...] = dout.sum(axis=0)
        return dout @ self.W

    def blocks(self, prefix):
        k = self.n_out * self.n_in
        return [(f"{prefix}.W", 0, k), (f"{prefix}.b", k, self.size)]


class Activation:
    size = 0

    def __init__(self, kind):
        self.kind = kind

    def bind(self, params, grads):
        pass

    def forward(self, x, train, update_stats):
        if self.kind == "relu":
            self._mask = x > 0
            return np.where(self._mask, x, 0.0)
        if self.kind == "sigmoid":
            # split on sign so exp never overflows
            e = np.exp(-np.abs(x))
            y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        else:
            y = np.tanh(x)
        self._y = y
        return y

    def backward(self, dout):
        if self.kind == "relu":
            return dout * self._mask
        if self.kind == "sigmoid":
            return dout * self._y * (1.0 - self._y)
        return dout * (1.0 - self._y ** 2)

    def blocks(self, prefix):
        return []


class BatchNorm:
    def __init__(self, n, eps=1e-5, momentum=0.9):
        self.n, self.eps, self.momentum = n, eps, momentum
        self.size = 2 * n
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)

    def bind(self, params, grads):
        self.scale, self.shift = params[: self.n], params[self.n:]
        self.dscale, self.dshift = grads[: self.n], grads[self.n:]

    def forward(self, x, train, update_stats):
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            if update_stats:
                m = self.momentum
                self.running_mean *= m
                self.running_mean += (1 - m) * mean
                self.running_var *= m
                self.running_var += (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._xhat, self._inv_std = xhat, inv_std
        return self.scale * xhat + self.shift

    def backward(self, dout):
        xhat, inv_std = self._xhat, self._inv_std
        n = dout.shape[0]
        self.dscale[...] = (dout * xhat).sum(axis=0)
        self.dshift[...] = dout.sum(axis=0)
        dxhat = dout * self.scale
        return (inv_std / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))

    def blocks(self, prefix):
        return [(f"{prefix}.scale", 0, self.n), (f"{prefix}.shift", self.n, self.size)]


@dataclass
class Mlp:
    layers: list
    n_in: int
    n_out: int
    mode: str = "train"
    params: np.ndarray = field(default=None, repr=False)
    grads: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        dims = self.n_in
        for layer in self.layers:
            if isinstance(layer, Dense):
                if layer.n_in != dims:
                    raise ModelError(f"dense layer expects {layer.n_in} inputs, previous width is {dims}")
                dims = layer.n_out
            elif isinstance(layer, BatchNorm) and layer.n != dims:
                raise ModelError(f"batchnorm width {layer.n} does not match {dims}")
        if dims != self.n_out:
            raise ModelError(f"final width {dims} does not match n_out {self.n_out}")
        size = sum(layer.size for layer in self.layers)
        if self.params is None:
            self.params = np.zeros(size)
        if self.params.shape != (size,):
            raise ModelError(f"parameter vector must have length {size}")
        self.grads = np.zeros(size)
        self._bind()

    def _bind(self):
        off = 0
        for layer in self.layers:
            layer.bind(self.params[off: off + layer.size], self.grads[off: off + layer.size])
            off += layer.size

    @property
    def size(self) -> int:
        return self.params.shape[0]

    def blocks(self) -> list[tuple[str, int, int]]:
        """(name, start, stop) slices of the flat vector, in layer order."""
        out, off = [], 0
        counts: dict[str, int] = {}
        for layer in self.layers:
            name = type(layer).__name__.lower()
            i = counts.get(name, 0)
            counts[name] = i + 1
            for block, a, b in layer.blocks(f"{name}{i}"):
                out.append((block, off + a, off + b))
            off += layer.size
        return out

    def copy(self) -> "Mlp":
        dup = copy.deepcopy(self)
        dup._bind()
        return dup

    def state_arrays(self) -> list[np.ndarray]:
        """Non-trainable arrays (batchnorm running statistics)."""
        out = []
        for layer in self.layers:
            if isinstance(layer, BatchNorm):
                out += [layer.running_mean, layer.running_var]
        return out


def build(spec: ModelSpec, n_in: int, n_out: int) -> Mlp:
    layers: list = []
    prev = n_in
    for h in spec.hidden:
        layers.append(Dense(prev, h))
        if spec.batchnorm:
            layers.append(BatchNorm(h, spec.bn_eps, spec.bn_momentum))
        layers.append(Activation(spec.activation))
        prev = h
    layers.append(Dense(prev, n_out))
    return Mlp(layers, n_in, n_out)


def init(spec: ModelSpec, n_in: int, n_out: int, seed: int) -> Mlp:
    """Seeded initialisation: He for relu layers, Xavier otherwise, zero biases."""
    model = build(spec, n_in, n_out)
    rng = np.random.default_rng(seed)
    for i, layer in enumerate(model.layers):
        if isinstance(layer, Dense):
            follows = next((l for l in model.layers[i + 1:] if isinstance(l, Activation)), None)
            is_output = all(not isinstance(l, Dense) for l in model.layers[i + 1:])
            if not is_output and follows is not None and follows.kind == "relu":
                std = np.sqrt(2.0 / layer.n_in)
            else:
                std = np.sqrt(2.0 / (layer.n_in + layer.n_out))
            layer.W[...] = rng.normal(0.0, std, size=layer.W.shape)
            layer.b[...] = 0.0
        elif isinstance(layer, BatchNorm):
            layer.scale[...] = 1.0
            layer.shift[...] = 0.0
    return model


def forward(model: Mlp, x: np.ndarray, mode: str | None = None, update_stats: bool = True) -> np.ndarray:
    """Pre-softmax scores for a batch; ``mode`` defaults to ``model.mode``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_in:
        raise ModelError(f"expected inputs of shape (n, {model.n_in}), got {x.shape}")
    train = (mode or model.mode) == "train"
    for layer in model.layers:
        x = layer.forward(x, train, update_stats)
    return x


def log_softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(scores: np.ndarray, labels: np.ndarray) -> float:
    labels = _check_labels(labels, scores.shape[1], scores.shape[0])
    return float(-log_softmax(scores)[np.arange(len(labels)), labels].mean())


def _check_labels(labels, k, n):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ModelError(f"expected {n} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ModelError("labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ModelError(f"labels must lie in [0, {k})")
    return labels


def loss_and_grad(model: Mlp, x, labels, update_stats: bool = True) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. ``model.params`` (a copy)."""
    scores = forward(model, x, update_stats=update_stats)
    labels = _check_labels(labels, model.n_out, scores.shape[0])
    logp = log_softmax(scores)
    n = scores.shape[0]
    loss = float(-logp[np.arange(n), labels].mean())
    dout = np.exp(logp)
    dout[np.arange(n), labels] -= 1.0
    dout /= n
    for layer in reversed(model.layers):
        dout = layer.backward(dout)
    return loss, model.grads.copy()


def predict(model: Mlp, x) -> np.ndarray:
    return forward(model, x, mode="eval").argmax(axis=1)


def evaluate(model: Mlp, x, labels) -> tuple[float, float]:
    """(loss, accuracy) in eval mode; does not touch model state."""
    scores = forward(model, x, mode="eval")
    labels = _check_labels(labels, model.n_out, scores.shape[0])
    return cross_entropy(scores, labels), float((scores.argmax(axis=1) == labels).mean())


@dataclass
class GradCheckReport:
    max_relative_error: float
    block_errors: dict[str, float]
    analytic: np.ndarray = field(repr=False)
    numeric: np.ndarray = field(repr=False)


def grad_check(model: Mlp, x, labels, fd_step: float = 1e-5, abs_floor: float = 1e-6) -> GradCheckReport:
    """Compare backprop against central differences on every parameter.

    Entry error is ``|a - n| / max(|a|, |n|, 1e-12)``; where both magnitudes
    fall below ``abs_floor`` the plain difference ``|a - n|`` is used
    instead, since the relative form is meaningless at a zero gradient.
    Batchnorm running statistics are left untouched.
    """
    saved = [a.copy() for a in model.state_arrays()]
    try:
        _, analytic = loss_and_grad(model, x, labels, update_stats=False)
        numeric = np.empty_like(analytic)
        p = model.params
        for i in range(p.shape[0]):
            orig = p[i]
            p[i] = orig + fd_step
            up = cross_entropy(forward(model, x, update_stats=False), labels)
            p[i] = orig - fd_step
            down = cross_entropy(forward(model, x, update_stats=False), labels)
            p[i] = orig
            numeric[i] = (up - down) / (2 * fd_step)
    finally:
        for arr, old in zip(model.state_arrays(), saved):
            arr[...] = old
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.where(scale < abs_floor, diff, diff / np.maximum(scale, 1e-12))
    blocks = {name: float(err[a:b].max()) if b > a else 0.0 for name, a, b in model.blocks()}
    return GradCheckReport(float(err.max()) if err.size else 0.0, blocks, analytic, numeric)

"""First-order optimizers driven by an externally supplied learning rate.

All six methods work on flat float64 parameter/gradient vectors and take the
learning rate as an argument on every step, so any schedule can drive them.
The rate multiplies the final update direction and nothing else; a step with
``2 * lr`` from the same state moves the parameters exactly twice as far.

Update rules (``g`` is the gradient, state starts at zero)::

    sgd       p -= lr * g
    nesterov  buf = mu * buf + g;            p -= lr * (g + mu * buf)
    adagrad   acc += g**2;                   p -= lr * g / (sqrt(acc) + eps)
    rmsprop   sq = rho * sq + (1-rho) g**2;  p -= lr * g / (sqrt(sq) + eps)
    adadelta  sq = rho * sq + (1-rho) g**2
              u = sqrt(sq_dx + eps) / sqrt(sq + eps) * g
              sq_dx = rho * sq_dx + (1-rho) u**2;     p -= lr * u
    adam      m, v moment averages, bias corrected;   p -= lr * m_hat / (sqrt(v_hat) + eps)

The Nesterov velocity is kept in gradient units (``buf``); the velocity in
parameter units is ``-lr * buf``. Under a constant rate this is the familiar
``v = mu*v - lr*g; p += mu*v - lr*g``. AdaDelta classically has no global
rate; here its step is scaled by ``lr`` (``lr = 1`` recovers the original).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

KINDS = ("sgd", "nesterov", "adagrad", "rmsprop", "adadelta", "adam")

DEFAULTS = {
    "sgd": {},
    "nesterov": {"mu": 0.9},
    "adagrad": {"eps": 1e-10},
    "rmsprop": {"rho": 0.99, "eps": 1e-8},
    "adadelta": {"rho": 0.95, "eps": 1e-6},
    "adam": {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
}

_BUFFERS = {
    "sgd": (),
    "nesterov": ("buf",),
    "adagrad": ("acc",),
    "rmsprop": ("sq",),
    "adadelta": ("sq", "sq_dx"),
    "adam": ("m", "v"),
}


class OptimizerError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"non-finite gradient at optimizer step {step}")
        self.step = step


@dataclass
class OptimizerState:
    kind: str
    size: int
    hyper: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)
    step: int = 0

    def reset(self):
        for buf in self.buffers.values():
            buf.fill(0.0)
        self.step = 0


def make_state(kind: str, size: int, **hyper) -> OptimizerState:
    if kind not in KINDS:
        raise OptimizerError(f"unknown optimizer {kind!r}; expected one of {', '.join(KINDS)}")
    params = dict(DEFAULTS[kind])
    for key, value in hyper.items():
        if key not in params:
            raise OptimizerError(f"unknown hyperparameter {key!r} for {kind}")
        params[key] = float(value)
    buffers = {name: np.zeros(size) for name in _BUFFERS[kind]}
    return OptimizerState(kind, size, params, buffers)


def _check(params, grads, lr, state):
    if params.shape != grads.shape or params.ndim != 1:
        raise OptimizerError(f"params {params.shape} and grads {grads.shape} must be equal-length vectors")
    if state is not None and state.size != params.shape[0]:
        raise OptimizerError(f"state sized for {state.size} parameters, got {params.shape[0]}")
    if not lr > 0:
        raise OptimizerError(f"learning rate must be positive, got {lr}")
    if not np.isfinite(grads).all():
        raise NonFiniteGradientError(state.step + 1 if state is not None else 0)


def step(params: np.ndarray, grads: np.ndarray, lr: float, state: OptimizerState) -> np.ndarray:
    """Apply one update in place; return the applied delta."""
    _check(params, grads, lr, state)
    state.step += 1
    h, b = state.hyper, state.buffers
    delta = np.empty_like(params)
    update = kernels.UPDATES[state.kind]
    lr = float(lr)
    if state.kind == "sgd":
        update(params, grads, lr, delta)
    elif state.kind == "nesterov":
        update(params, grads, lr, h["mu"], b["buf"], delta)
    elif state.kind == "adagrad":
        update(params, grads, lr, h["eps"], b["acc"], delta)
    elif state.kind == "rmsprop":
        update(params, grads, lr, h["rho"], h["eps"], b["sq"], delta)
    elif state.kind == "adadelta":
        update(params, grads, lr, h["rho"], h["eps"], b["sq"], b["sq_dx"], delta)
    else:
        update(params, grads, lr, h["beta1"], h["beta2"], h["eps"], float(state.step),
               b["m"], b["v"], delta)
    return delta


def sgd_step(params, grads, lr, state=None):
    if state is None:
        _check(params, grads, lr, None)
        delta = np.empty_like(params)
        kernels.UPDATES["sgd"](params, grads, float(lr), delta)
        return params
    _expect(state, "sgd")
    step(params, grads, lr, state)
    return params


def _expect(state, kind):
    if state.kind != kind:
        raise OptimizerError(f"expected {kind} state, got {state.kind}")


def _stepper(kind):
    def fn(params, grads, lr, state):
        _expect(state, kind)
        step(params, grads, lr, state)
        return params

    fn.__name__ = f"{kind}_step"
    fn.__doc__ = f"One in-place {kind} update; returns ``params``."
    return fn


nesterov_step = _stepper("nesterov")
adagrad_step = _stepper("adagrad")
rmsprop_step = _stepper("rmsprop")
adadelta_step = _stepper("adadelta")
adam_step = _stepper("adam")

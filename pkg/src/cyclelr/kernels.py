"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The public functions dispatch on :data:`cyclelr._accel.USE_NUMBA`. Both
twins are importable directly (``*_jit`` / ``*_np``) so tests and the
benchmark can compare them.

Schedule series are bit-identical to the scalar policies in
:mod:`cyclelr.schedules` on either path. Optimizer and smoothing kernels
agree to rounding; each path is deterministic on its own.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

# policy / window codes, indices into schedules.KINDS and schedules.WINDOWS
FIXED, EXP, DECAY, TRIANGULAR, TRIANGULAR2, EXP_RANGE = range(6)
W_TRIANGULAR, W_WELCH, W_HANN = range(3)


# -- learning-rate series ----------------------------------------------------

@njit
def _window_jit(x, window):
    if window == 0:
        return max(0.0, 1.0 - x)
    if window == 1:
        return max(0.0, 1.0 - x * x)
    return 0.5 * (1.0 + math.cos(math.pi * min(x, 1.0)))


@njit
def lr_series_jit(kind, window, base, mx, stepsize, gamma, start, ts):
    out = np.empty(ts.shape[0])
    amp = mx - base
    for i in range(ts.shape[0]):
        te = ts[i] - start
        if kind == 0:
            out[i] = base
        elif kind == 1:
            if te < 0:
                te = 0
            out[i] = base * math.pow(gamma, float(te))
        elif kind == 2:
            if te < 0:
                te = 0
            if te >= stepsize:
                out[i] = base
            else:
                out[i] = mx - amp * (te / stepsize)
        elif te <= 0:
            out[i] = base
        else:
            cycle0 = te // (2 * stepsize)
            x = abs((te - (2 * cycle0 + 1) * stepsize) / stepsize)
            if kind == 3:
                out[i] = base + amp * _window_jit(x, window)
            elif kind == 4:
                out[i] = base + amp * min(1.0, math.ldexp(_window_jit(x, window), -cycle0))
            else:
                out[i] = base + amp * _window_jit(x, window) * math.pow(gamma, float(te))
    return out


_pow = np.frompyfunc(math.pow, 2, 1)


def _libm_pow(base, exps):
    # np.power is not always bit-identical to libm pow
    return _pow(base, exps.astype(np.float64)).astype(np.float64)


def _window_np(x, window):
    if window == 0:
        return np.maximum(0.0, 1.0 - x)
    if window == 1:
        return np.maximum(0.0, 1.0 - x * x)
    return 0.5 * (1.0 + np.cos(np.pi * np.minimum(x, 1.0)))


def lr_series_np(kind, window, base, mx, stepsize, gamma, start, ts):
    ts = np.asarray(ts, dtype=np.int64)
    te = ts - start
    amp = mx - base
    if kind == FIXED:
        return np.full(ts.shape, base, dtype=np.float64)
    if kind == EXP:
        return base * _libm_pow(gamma, np.maximum(te, 0))
    if kind == DECAY:
        te = np.maximum(te, 0)
        out = mx - amp * (te / stepsize)
        out[te >= stepsize] = base
        return out
    out = np.full(ts.shape, base, dtype=np.float64)
    live = te > 0
    te = te[live]
    cycle0 = te // (2 * stepsize)
    x = np.abs((te - (2 * cycle0 + 1) * stepsize) / stepsize)
    if kind == TRIANGULAR2:
        out[live] = base + amp * np.minimum(1.0, np.ldexp(_window_np(x, window), -cycle0))
    elif kind == TRIANGULAR:
        out[live] = base + amp * _window_np(x, window)
    else:
        out[live] = base + amp * _window_np(x, window) * _libm_pow(gamma, te)
    return out


def lr_series(kind, window, base, mx, stepsize, gamma, start, ts):
    ts = np.ascontiguousarray(ts, dtype=np.int64)
    if USE_NUMBA:
        return lr_series_jit(kind, window, float(base), float(mx), int(stepsize),
                             float(gamma), int(start), ts)
    return lr_series_np(kind, window, base, mx, stepsize, gamma, start, ts)


# -- optimizer updates -------------------------------------------------------
# Each kernel updates params and state in place and writes the applied delta.
# lr enters every delta exactly once, as an outer factor.

@njit
def sgd_jit(p, g, lr, delta):
    for i in range(p.shape[0]):
        d = -lr * g[i]
        p[i] += d
        delta[i] = d


@njit
def nesterov_jit(p, g, lr, mu, buf, delta):
    for i in range(p.shape[0]):
        buf[i] = mu * buf[i] + g[i]
        d = -lr * (g[i] + mu * buf[i])
        p[i] += d
        delta[i] = d


@njit
def adagrad_jit(p, g, lr, eps, acc, delta):
    for i in range(p.shape[0]):
        acc[i] += g[i] * g[i]
        d = -lr * (g[i] / (math.sqrt(acc[i]) + eps))
        p[i] += d
        delta[i] = d


@njit
def rmsprop_jit(p, g, lr, rho, eps, sq, delta):
    for i in range(p.shape[0]):
        sq[i] = rho * sq[i] + (1.0 - rho) * g[i] * g[i]
        d = -lr * (g[i] / (math.sqrt(sq[i]) + eps))
        p[i] += d
        delta[i] = d


@njit
def adadelta_jit(p, g, lr, rho, eps, sq, sq_dx, delta):
    for i in range(p.shape[0]):
        sq[i] = rho * sq[i] + (1.0 - rho) * g[i] * g[i]
        u = math.sqrt(sq_dx[i] + eps) / math.sqrt(sq[i] + eps) * g[i]
        sq_dx[i] = rho * sq_dx[i] + (1.0 - rho) * u * u
        d = -lr * u
        p[i] += d
        delta[i] = d


@njit
def adam_jit(p, g, lr, beta1, beta2, eps, step, m, v, delta):
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for i in range(p.shape[0]):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        d = -lr * ((m[i] / c1) / (math.sqrt(v[i] / c2) + eps))
        p[i] += d
        delta[i] = d


def sgd_np(p, g, lr, delta):
    np.multiply(g, -lr, out=delta)
    p += delta


def nesterov_np(p, g, lr, mu, buf, delta):
    buf *= mu
    buf += g
    np.multiply(g + mu * buf, -lr, out=delta)
    p += delta


def adagrad_np(p, g, lr, eps, acc, delta):
    acc += g * g
    np.multiply(g / (np.sqrt(acc) + eps), -lr, out=delta)
    p += delta


def rmsprop_np(p, g, lr, rho, eps, sq, delta):
    sq *= rho
    sq += (1.0 - rho) * g * g
    np.multiply(g / (np.sqrt(sq) + eps), -lr, out=delta)
    p += delta


def adadelta_np(p, g, lr, rho, eps, sq, sq_dx, delta):
    sq *= rho
    sq += (1.0 - rho) * g * g
    u = np.sqrt(sq_dx + eps) / np.sqrt(sq + eps) * g
    sq_dx *= rho
    sq_dx += (1.0 - rho) * u * u
    np.multiply(u, -lr, out=delta)
    p += delta


def adam_np(p, g, lr, beta1, beta2, eps, step, m, v, delta):
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    np.multiply((m / c1) / (np.sqrt(v / c2) + eps), -lr, out=delta)
    p += delta


UPDATES_JIT = {
    "sgd": sgd_jit, "nesterov": nesterov_jit, "adagrad": adagrad_jit,
    "rmsprop": rmsprop_jit, "adadelta": adadelta_jit, "adam": adam_jit,
}
UPDATES_NP = {
    "sgd": sgd_np, "nesterov": nesterov_np, "adagrad": adagrad_np,
    "rmsprop": rmsprop_np, "adadelta": adadelta_np, "adam": adam_np,
}
UPDATES = UPDATES_JIT if USE_NUMBA else UPDATES_NP


# -- trace smoothing ---------------------------------------------------------
# Centred windows; near the ends the window is truncated to the rows present.

@njit
def moving_average_jit(x, window):
    n = x.shape[0]
    half = window // 2
    out = np.empty(n)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        s = 0.0
        for j in range(lo, hi):
            s += x[j]
        out[i] = s / (hi - lo)
    return out


@njit
def rolling_std_jit(x, window):
    n = x.shape[0]
    half = window // 2
    out = np.empty(n)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        s = 0.0
        for j in range(lo, hi):
            s += x[j]
        mean = s / (hi - lo)
        ss = 0.0
        for j in range(lo, hi):
            ss += (x[j] - mean) ** 2
        out[i] = math.sqrt(ss / (hi - lo))
    return out


def _windows(n, window):
    half = window // 2
    idx = np.arange(n)
    return np.maximum(0, idx - half), np.minimum(n, idx + half + 1)


def moving_average_np(x, window):
    x = np.asarray(x, dtype=np.float64)
    lo, hi = _windows(x.shape[0], window)
    csum = np.concatenate(([0.0], np.cumsum(x)))
    return (csum[hi] - csum[lo]) / (hi - lo)


def rolling_std_np(x, window):
    x = np.asarray(x, dtype=np.float64)
    lo, hi = _windows(x.shape[0], window)
    return np.array([x[a:b].std() for a, b in zip(lo, hi)])


def moving_average(x, window):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return moving_average_jit(x, int(window)) if USE_NUMBA else moving_average_np(x, window)


def rolling_std(x, window):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return rolling_std_jit(x, int(window)) if USE_NUMBA else rolling_std_np(x, window)


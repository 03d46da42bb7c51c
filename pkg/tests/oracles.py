"""Independent reference implementations used by the tests.

Nothing here imports the package's formulas. The schedule oracle walks
iterations one at a time, tracking its position inside the current cycle
with integer counters, the way a training loop would if it only knew the
rules "climb for stepsize steps, descend for stepsize steps, halve the band
after each cycle, multiply the band by gamma every step".
"""

import numpy as np

KIND_CODE = {"fixed": 0, "exp": 1, "decay": 2, "triangular": 3, "triangular2": 4, "exp_range": 5}


def _window(dist, window):
    # dist is the distance from the peak, in units of stepsize, in [0, 1]
    if window == "triangular":
        return 1.0 - dist
    if window == "welch":
        return 1.0 - dist * dist
    return 0.5 + 0.5 * np.cos(np.pi * dist)


def walk_schedules(specs, samples):
    """Simulate many policies step by step in lock-step.

    ``specs`` is a list of dicts (kind, base_lr, max_lr, stepsize, gamma,
    start, window). ``samples`` is an int array of shape (len(specs), m),
    each row sorted. Returns the simulated rate at each sampled iteration.
    """
    n = len(specs)
    base = np.array([s["base_lr"] for s in specs])
    mx = np.array([s.get("max_lr") or s["base_lr"] for s in specs])
    step = np.array([s.get("stepsize") or 1 for s in specs], dtype=np.int64)
    gamma = np.array([s.get("gamma") or 1.0 for s in specs])
    start = np.array([s.get("start", 0) for s in specs], dtype=np.int64)
    kind = np.array([KIND_CODE[s["kind"]] for s in specs])
    windows = np.array([s.get("window", "triangular") for s in specs])

    amp = mx - base                 # band, halved per cycle for triangular2
    pos = np.zeros(n, dtype=np.int64)  # iterations into the current cycle
    decay_left = step.copy()        # decay: iterations until base is reached
    gpow = np.ones(n)               # gamma ** (iterations since start)

    out = np.empty(samples.shape)
    ptr = np.zeros(n, dtype=np.int64)
    horizon = int(samples.max())
    rows = np.arange(n)
    for t in range(horizon + 1):
        live = t > start  # policy clock te = t - start is positive
        # advance clocks for this iteration (te >= 1 here)
        pos = np.where(live, pos + 1, pos)
        wrap = live & (pos > 2 * step)
        pos = np.where(wrap, pos - 2 * step, pos)
        amp = np.where(wrap & (kind == 4), amp * 0.5, amp)
        gpow = np.where(live, gpow * gamma, gpow)
        decay_left = np.where(live, np.maximum(decay_left - 1, 0), decay_left)

        dist = np.abs(pos - step) / step
        w = np.empty(n)
        for name in ("triangular", "welch", "hann"):
            m = windows == name
            w[m] = _window(dist[m], name)
        lr = base.copy()
        cyc = live & ((kind == 3) | (kind == 4))
        lr[cyc] = base[cyc] + amp[cyc] * w[cyc]
        er = live & (kind == 5)
        lr[er] = base[er] + amp[er] * w[er] * gpow[er]
        ex = kind == 1
        lr[ex] = base[ex] * gpow[ex]
        de = kind == 2
        lr[de] = base[de] + amp[de] * (decay_left[de] / step[de])

        # record rows whose next sample is t
        hit = (ptr < samples.shape[1]) & (samples[rows, np.minimum(ptr, samples.shape[1] - 1)] == t)
        while hit.any():
            out[rows[hit], ptr[hit]] = lr[hit]
            ptr[hit] += 1
            hit = (ptr < samples.shape[1]) & (samples[rows, np.minimum(ptr, samples.shape[1] - 1)] == t)
    return out


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.abs(b), np.finfo(float).tiny)


def numeric_grad(f, x, h=1e-6):
    """Central differences of scalar ``f`` at flat array ``x``."""
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def planted_curve(rng, n=200, base_knee=None, max_knee=None, noise=0.0, lr_start=1e-3, lr_end=1.0):
    """Flat, linear rise, plateau, then a drop into noisy collapse.

    Returns (lrs, metric, base_knee_row, max_knee_row). The metric lives in
    [0, 1]; the planted base is the first row of the rise and the planted max
    is the first row of the collapse.
    """
    lrs = np.linspace(lr_start, lr_end, n)
    if base_knee is None:
        base_knee = int(rng.integers(n // 10, n // 4))
    if max_knee is None:
        max_knee = int(rng.integers(base_knee + n // 3, n - n // 6))
    lo, hi = 0.1 + 0.2 * rng.random(), 0.85 + 0.1 * rng.random()
    rise_end = base_knee + (max_knee - base_knee) // 2
    y = np.full(n, lo)
    ramp = np.arange(base_knee, rise_end + 1)
    y[ramp] = lo + (hi - lo) * (ramp - base_knee + 1) / (rise_end - base_knee + 1)
    y[rise_end:max_knee] = hi
    tail = np.arange(max_knee, n)
    y[tail] = hi - (hi - lo) * 0.6 * np.minimum(1.0, (tail - max_knee + 1) / 6)
    y[tail] += (hi - lo) * 0.15 * rng.standard_normal(tail.size)
    y = y + noise * rng.standard_normal(n)
    return lrs, y, base_knee, max_knee



EPS = np.finfo(float).eps


def torch_form_bound(spec, ts):
    """Largest gap the Torch listing's ``te / stepsize`` rounding can cause."""
    te = np.maximum(np.asarray(ts) - spec.start, 0)
    amp = spec.max_lr - spec.base_lr
    return 2 * amp * EPS * (te / spec.stepsize + 2) + 4 * EPS * spec.max_lr

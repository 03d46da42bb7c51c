"""LR range test: sweep the rate upward once, then read bounds off the curve.

The trainer passed to :func:`run_range_test` only needs two methods::

    step(lr) -> float          one optimizer step, returns the batch loss
    evaluate() -> (loss, acc)  held-out metrics, no state change

:class:`cyclelr.harness.Trainer` provides both.

Bound estimation formalises reading the plot by eye. With ``span`` the range
of the raw metric (so thresholds are scale free):

* ``base_lr``: first rate where the smoothed metric improves on its starting
  value by ``rise_eps * span``.
* ``max_lr``: first later rate where the smoothed metric has dropped
  ``fall_eps * span`` below its running best, or where the metric turns
  ragged: the rolling std over ``ragged_window`` rows of the raw metric,
  detrended by its moving average, exceeds ``ragged_eps * span``. This
  search starts once the smoothed metric has covered half its total rise,
  and only rows from there on enter the raggedness statistic.

For ``metric="loss"`` the curve is negated first, so "improves" means falls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from ._io import atomic_write_text, csv_text

METRICS = ("accuracy", "loss")


class RangeTestError(ValueError):
    pass


class NeverConvergedError(RangeTestError):
    def __init__(self, detail: str = ""):
        msg = "model never converged in tested range"
        super().__init__(f"{msg}: {detail}" if detail else msg)


@dataclass(frozen=True)
class RangeTestConfig:
    lr_start: float = 1e-3
    lr_end: float = 8.0
    num_iters: int = 400
    eval_every: int = 2
    metric: str = "accuracy"

    def __post_init__(self):
        if not 0 < self.lr_start < self.lr_end:
            raise RangeTestError("need 0 < lr_start < lr_end")
        if self.num_iters < 2:
            raise RangeTestError("num_iters must be at least 2")
        if not 1 <= self.eval_every <= self.num_iters:
            raise RangeTestError("eval_every must lie in [1, num_iters]")
        if self.metric not in METRICS:
            raise RangeTestError(f"metric must be one of {', '.join(METRICS)}")


@dataclass(frozen=True, eq=False)
class RangeTestTrace:
    iters: np.ndarray
    lrs: np.ndarray
    raw: np.ndarray
    smoothed: np.ndarray | None = None
    metric: str = "accuracy"
    diverged: bool = False
    notes: tuple[str, ...] = ()

    def __len__(self):
        return self.iters.shape[0]

    @property
    def rows(self):
        sm = self.smoothed if self.smoothed is not None else [None] * len(self)
        return [(int(i), float(l), float(r), None if s is None else float(s))
                for i, l, r, s in zip(self.iters, self.lrs, self.raw, sm)]

    def to_csv(self) -> str:
        sm = self.smoothed if self.smoothed is not None else np.full(len(self), np.nan)
        return csv_text(("iter", "lr", "metric", "smoothed"),
                        ((int(i), l, r, s) for i, l, r, s in zip(self.iters, self.lrs, self.raw, sm)))

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())


@dataclass(frozen=True)
class BoundEstimate:
    base_lr: float
    max_lr: float
    method: str
    diagnostics: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not 0 < self.base_lr < self.max_lr:
            raise RangeTestError(f"bounds must satisfy 0 < base_lr < max_lr, got {self.base_lr}, {self.max_lr}")

    def to_dict(self) -> dict:
        return {"base_lr": self.base_lr, "max_lr": self.max_lr, "method": self.method,
                "diagnostics": list(self.diagnostics)}


def range_test_lr(t: int, cfg: RangeTestConfig) -> float:
    if not 0 <= t < cfg.num_iters:
        raise RangeTestError(f"iteration {t} outside [0, {cfg.num_iters})")
    if t == cfg.num_iters - 1:
        return cfg.lr_end
    return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * (t / (cfg.num_iters - 1))


def run_range_test(trainer, cfg: RangeTestConfig) -> RangeTestTrace:
    """Train with a linearly rising rate, recording the metric every ``eval_every`` steps.

    A non-finite loss ends the sweep early; the rows gathered so far are kept
    and the trace is flagged as diverged.
    """
    if getattr(trainer, "iteration", 0) != 0:
        raise RangeTestError("the range test needs a freshly initialised trainer")
    iters, lrs, raw = [], [], []
    diverged = False
    notes = []
    for t in range(cfg.num_iters):
        lr = range_test_lr(t, cfg)
        loss = trainer.step(lr)
        if not math.isfinite(loss):
            diverged = True
            notes.append(f"loss became non-finite at iteration {t} (lr={lr:.6g})")
            break
        if (t + 1) % cfg.eval_every:
            continue
        ev_loss, ev_acc = trainer.evaluate()
        if not math.isfinite(ev_loss):
            diverged = True
            notes.append(f"evaluation loss became non-finite at iteration {t} (lr={lr:.6g})")
            break
        iters.append(t)
        lrs.append(lr)
        raw.append(ev_acc if cfg.metric == "accuracy" else ev_loss)
    return RangeTestTrace(np.asarray(iters, dtype=np.int64), np.asarray(lrs, dtype=np.float64),
                          np.asarray(raw, dtype=np.float64), None, cfg.metric, diverged, tuple(notes))


def smooth(trace: RangeTestTrace, window: int = 5) -> RangeTestTrace:
    """Centred moving average of the raw metric, truncated at the ends."""
    if window < 1 or window % 2 == 0:
        raise RangeTestError(f"smoothing window must be a positive odd integer, got {window}")
    if window > len(trace):
        raise RangeTestError(f"smoothing window {window} exceeds the {len(trace)} trace rows")
    return replace(trace, smoothed=kernels.moving_average(trace.raw, window))


def estimate_bounds(trace: RangeTestTrace, rise_eps: float = 0.02, fall_eps: float = 0.05,
                    ragged_window: int = 7, ragged_eps: float = 0.03,
                    smooth_window: int = 5) -> BoundEstimate:
    n = len(trace)
    if n < 10:
        raise NeverConvergedError(f"only {n} usable rows in the trace (need at least 10)")
    if trace.smoothed is None:
        trace = smooth(trace, smooth_window)
    sign = 1.0 if trace.metric == "accuracy" else -1.0
    raw = sign * trace.raw
    sm = sign * trace.smoothed
    span = float(raw.max() - raw.min())
    if span == 0.0:
        raise NeverConvergedError("the metric is constant")
    notes = list(trace.notes)

    # the starting level is the first row itself when the truncated smoothing
    # window drags sm[0] below it; a chaotic sweep then cannot pass for a rise
    ref = max(sm[0], raw[0])
    rising = np.flatnonzero(sm > ref + rise_eps * span)
    if rising.size == 0:
        raise NeverConvergedError("the metric never rose above its starting value")
    b = int(rising[0])
    if b == n - 1:
        raise NeverConvergedError("the metric only started improving at the last row")

    # the top bound is searched once the curve has made half its total rise;
    # before that, the jump out of the untrained regime reads as noise
    h = max(b + 1, int(np.flatnonzero(sm >= ref + 0.5 * (sm.max() - ref))[0]))
    if h >= n:
        h = n - 1
    best = np.maximum.accumulate(sm[h:])
    fell = sm[h:] < best - fall_eps * span
    seg = raw[h:]
    if seg.size >= 3:
        resid = seg - kernels.moving_average(seg, min(smooth_window, _odd_floor(seg.size)))
    else:
        resid = np.zeros(seg.size)
    ragged = kernels.rolling_std(resid, ragged_window) > ragged_eps * span
    hit = np.flatnonzero(fell | ragged)
    if hit.size:
        m = h + int(hit[0])
        why = "fall from running best" if fell[m - h] else "raggedness"
        notes.append(f"max_lr set by {why} at lr={trace.lrs[m]:.6g}")
    else:
        m = n - 1
        notes.append("no fall or raggedness detected; max_lr is the last tested rate "
                     "(the sweep may not reach divergence)")
    return BoundEstimate(float(trace.lrs[b]), float(trace.lrs[m]), "curve", tuple(notes))


def _odd_floor(n):
    return n if n % 2 else n - 1


def rule_of_thumb(max_lr: float, divisor: int = 3) -> BoundEstimate:
    """Lower bound as a third or a quarter of the upper one."""
    if divisor not in (3, 4):
        raise RangeTestError("divisor must be 3 or 4")
    if not max_lr > 0:
        raise RangeTestError("max_lr must be positive")
    return BoundEstimate(max_lr / divisor, max_lr, "rule_of_thumb", (f"base_lr = max_lr / {divisor}",))

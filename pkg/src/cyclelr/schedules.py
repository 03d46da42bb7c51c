"""Learning-rate policies as pure functions of the global iteration.

Every policy is described by an immutable :class:`PolicySpec`; multi-stage
runs chain several specs in a :class:`PhasedSchedule`. The scalar functions
here are the reference path. :func:`lr_series` evaluates many iterations at
once through a jitted kernel (or its numpy twin) and returns bit-identical
values.

Cyclic policies (triangular, triangular2, exp_range) count a cycle as
``2 * stepsize`` iterations: the rate starts at ``base_lr``, peaks at
``max_lr`` after ``stepsize`` iterations and is back at ``base_lr`` at the
end of the cycle.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence, Union

import numpy as np

from . import kernels

KINDS = ("fixed", "exp", "decay", "triangular", "triangular2", "exp_range")
WINDOWS = ("triangular", "welch", "hann")
CYCLIC_KINDS = ("triangular", "triangular2", "exp_range")
_NEEDS_BAND = ("decay", "triangular", "triangular2", "exp_range")
_NEEDS_GAMMA = ("exp", "exp_range")


class ScheduleError(ValueError):
    """Invalid schedule configuration or out-of-range query."""


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    base_lr: float
    max_lr: float | None = None
    stepsize: int | None = None
    gamma: float | None = None
    start: int = 0
    window: str = "triangular"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScheduleError(f"unknown policy kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.window not in WINDOWS:
            raise ScheduleError(f"unknown window {self.window!r}; expected one of {', '.join(WINDOWS)}")
        if not (self.base_lr > 0 and math.isfinite(self.base_lr)):
            raise ScheduleError(f"base_lr must be a positive finite number, got {self.base_lr!r}")
        if self.kind in _NEEDS_BAND:
            if self.max_lr is None:
                raise ScheduleError(f"policy {self.kind!r} requires max_lr")
            if self.stepsize is None:
                raise ScheduleError(f"policy {self.kind!r} requires stepsize")
        if self.max_lr is not None:
            if not math.isfinite(self.max_lr) or self.max_lr < self.base_lr:
                raise ScheduleError(f"max_lr ({self.max_lr}) must be >= base_lr ({self.base_lr})")
        if self.stepsize is not None:
            if int(self.stepsize) != self.stepsize or self.stepsize < 1:
                raise ScheduleError(f"stepsize must be a positive integer, got {self.stepsize!r}")
            object.__setattr__(self, "stepsize", int(self.stepsize))
        if self.kind in _NEEDS_GAMMA and self.gamma is None:
            raise ScheduleError(f"policy {self.kind!r} requires gamma")
        if self.gamma is not None and not (0 < self.gamma <= 1):
            raise ScheduleError(f"gamma must lie in (0, 1], got {self.gamma!r}")
        if int(self.start) != self.start or self.start < 0:
            raise ScheduleError(f"start must be a non-negative integer, got {self.start!r}")
        object.__setattr__(self, "start", int(self.start))

    @property
    def cyclic(self) -> bool:
        return self.kind in CYCLIC_KINDS

    def lr(self, t: int) -> float:
        return lr_at(t, self)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "PolicySpec":
        allowed = {f for f in cls.__dataclass_fields__}
        for key in d:
            if key not in allowed:
                raise ScheduleError(f"unknown schedule key {key!r}")
        if "kind" not in d or "base_lr" not in d:
            raise ScheduleError("schedule requires 'kind' and 'base_lr'")
        return cls(**d)


@dataclass(frozen=True)
class PhasedSchedule:
    """Consecutive policies, each evaluated relative to its own start iteration."""

    phases: tuple[tuple[int, PolicySpec], ...]
    max_iter: int
    _starts: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        phases = tuple((int(s), p) for s, p in self.phases)
        if not phases:
            raise ScheduleError("a phased schedule needs at least one phase")
        if phases[0][0] != 0:
            raise ScheduleError("the first phase must start at iteration 0")
        starts = [s for s, _ in phases]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ScheduleError("phase start iterations must be strictly increasing")
        if self.max_iter < 1 or starts[-1] >= self.max_iter:
            raise ScheduleError("max_iter must exceed the last phase start")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "max_iter", int(self.max_iter))
        object.__setattr__(self, "_starts", tuple(starts))

    @property
    def cyclic(self) -> bool:
        return any(p.cyclic for _, p in self.phases)

    def phase_at(self, t: int) -> tuple[int, PolicySpec]:
        if not 0 <= t < self.max_iter:
            raise ScheduleError(f"iteration {t} outside [0, {self.max_iter})")
        i = int(np.searchsorted(self._starts, t, side="right")) - 1
        return self.phases[i]

    def lr(self, t: int) -> float:
        return lr_phased(t, self)

    def to_dict(self) -> dict:
        return {
            "phases": [dict(start_iter=s, **p.to_dict()) for s, p in self.phases],
            "max_iter": self.max_iter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhasedSchedule":
        for key in d:
            if key not in ("phases", "max_iter"):
                raise ScheduleError(f"unknown schedule key {key!r}")
        if "phases" not in d or "max_iter" not in d:
            raise ScheduleError("phased schedule requires 'phases' and 'max_iter'")
        phases = []
        for ph in d["phases"]:
            ph = dict(ph)
            if "start_iter" not in ph:
                raise ScheduleError("each phase requires 'start_iter'")
            start = ph.pop("start_iter")
            phases.append((start, PolicySpec.from_dict(ph)))
        return cls(tuple(phases), d["max_iter"])


Schedule = Union[PolicySpec, PhasedSchedule]


def schedule_from_dict(d: dict) -> Schedule:
    if "phases" in d:
        return PhasedSchedule.from_dict(d)
    return PolicySpec.from_dict(d)


def reference_phased_schedule() -> PhasedSchedule:
    """The three-stage triangular2 run used for the CIFAR-10 Caffe example."""
    return PhasedSchedule(
        (
            (0, PolicySpec("triangular2", 0.001, 0.005, 2000)),
            (16000, PolicySpec("triangular2", 0.0001, 0.0005, 1000)),
            (22000, PolicySpec("triangular2", 0.00001, 0.00005, 500)),
        ),
        max_iter=25000,
    )


# -- building blocks ---------------------------------------------------------

def cycle_index(t: int, stepsize: int) -> int:
    """1-based number of the cycle containing iteration ``t``."""
    return 1 + t // (2 * stepsize)


def window_factor(x: float, window: str = "triangular") -> float:
    if window == "triangular":
        return max(0.0, 1.0 - x)
    if window == "welch":
        return max(0.0, 1.0 - x * x)
    if window == "hann":
        return 0.5 * (1.0 + math.cos(math.pi * min(x, 1.0)))
    raise ScheduleError(f"unknown window {window!r}")


def _expect(spec: PolicySpec, kind: str):
    if spec.kind != kind:
        raise ScheduleError(f"expected a {kind!r} spec, got {spec.kind!r}")


# -- policies ----------------------------------------------------------------

def lr_fixed(t: int, spec: PolicySpec) -> float:
    _expect(spec, "fixed")
    return spec.base_lr


def lr_exp(t: int, spec: PolicySpec) -> float:
    _expect(spec, "exp")
    te = max(t - spec.start, 0)
    return spec.base_lr * spec.gamma ** float(te)


def lr_decay(t: int, spec: PolicySpec) -> float:
    _expect(spec, "decay")
    te = max(t - spec.start, 0)
    if te >= spec.stepsize:
        return spec.base_lr
    return spec.max_lr - (spec.max_lr - spec.base_lr) * (te / spec.stepsize)


def _ramp(te: int, s: int) -> float:
    """Distance from the nearest peak in stepsizes, in [0, 1].

    Uses the zero-based cycle counter so the numerator is an exact integer;
    the one-based ``te/s - 2*cycle + 1`` of the Torch listing is the same
    number but loses about ``te/s`` ulps to cancellation on long runs.
    """
    cycle0 = te // (2 * s)
    return abs((te - (2 * cycle0 + 1) * s) / s)


def lr_triangular(t: int, spec: PolicySpec) -> float:
    _expect(spec, "triangular")
    te = t - spec.start
    if te <= 0:
        return spec.base_lr
    x = _ramp(te, spec.stepsize)
    return spec.base_lr + (spec.max_lr - spec.base_lr) * window_factor(x, spec.window)


def lr_triangular_torch(t: int, spec: PolicySpec) -> float:
    """Triangular rate computed literally as in the Torch listing.

    Kept to cross-check :func:`lr_triangular`. The two differ only by the
    rounding of ``te / stepsize``: at most about
    ``2 * (max_lr - base_lr) * eps * (te / stepsize + 2)``.
    """
    _expect(spec, "triangular")
    te = t - spec.start
    if te <= 0:
        return spec.base_lr
    s = spec.stepsize
    cycle = math.floor(1 + te / (2 * s))
    x = abs(te / s - 2 * cycle + 1)
    return spec.base_lr + (spec.max_lr - spec.base_lr) * window_factor(x, spec.window)


def lr_triangular2(t: int, spec: PolicySpec) -> float:
    _expect(spec, "triangular2")
    te = t - spec.start
    if te <= 0:
        return spec.base_lr
    cycle0 = te // (2 * spec.stepsize)
    # ldexp divides by 2**cycle0 exactly without overflowing on long runs
    scale = min(1.0, math.ldexp(window_factor(_ramp(te, spec.stepsize), spec.window), -cycle0))
    return spec.base_lr + (spec.max_lr - spec.base_lr) * scale


def lr_exp_range(t: int, spec: PolicySpec) -> float:
    _expect(spec, "exp_range")
    te = t - spec.start
    if te <= 0:
        return spec.base_lr
    amp = (spec.max_lr - spec.base_lr) * window_factor(_ramp(te, spec.stepsize), spec.window)
    return spec.base_lr + amp * spec.gamma ** float(te)


_POLICIES = {
    "fixed": lr_fixed,
    "exp": lr_exp,
    "decay": lr_decay,
    "triangular": lr_triangular,
    "triangular2": lr_triangular2,
    "exp_range": lr_exp_range,
}


def lr_phased(t: int, sched: PhasedSchedule) -> float:
    start, spec = sched.phase_at(t)
    return _POLICIES[spec.kind](t - start, spec)


def lr_at(t: int, schedule: Schedule) -> float:
    """Learning rate at global iteration ``t`` for either schedule type."""
    if t < 0:
        raise ScheduleError(f"iteration must be non-negative, got {t}")
    if isinstance(schedule, PhasedSchedule):
        return lr_phased(t, schedule)
    return _POLICIES[schedule.kind](t, schedule)


def lr_series(schedule: Schedule, iters: int | Sequence[int] | np.ndarray) -> np.ndarray:
    """Vectorised :func:`lr_at` over ``range(iters)`` or an array of iterations."""
    if np.isscalar(iters):
        ts = np.arange(int(iters), dtype=np.int64)
    else:
        ts = np.asarray(iters, dtype=np.int64)
    if ts.size and ts.min() < 0:
        raise ScheduleError("iterations must be non-negative")
    if isinstance(schedule, PhasedSchedule):
        if ts.size and ts.max() >= schedule.max_iter:
            raise ScheduleError(f"iteration {int(ts.max())} outside [0, {schedule.max_iter})")
        out = np.empty(ts.shape, dtype=np.float64)
        idx = np.searchsorted(schedule._starts, ts, side="right") - 1
        for i, (start, spec) in enumerate(schedule.phases):
            mask = idx == i
            out[mask] = _spec_series(spec, ts[mask] - start)
        return out
    return _spec_series(schedule, ts)


def _spec_series(spec: PolicySpec, ts: np.ndarray) -> np.ndarray:
    return kernels.lr_series(
        KINDS.index(spec.kind),
        WINDOWS.index(spec.window),
        spec.base_lr,
        spec.max_lr if spec.max_lr is not None else spec.base_lr,
        spec.stepsize or 1,
        spec.gamma if spec.gamma is not None else 1.0,
        spec.start,
        ts,
    )


def half_cycle_boundaries(schedule: Schedule, max_iter: int) -> list[int]:
    """Iterations in ``(0, max_iter]`` where a cyclic rate hits a band edge.

    Odd multiples of the stepsize are peaks, even multiples are cycle ends.
    Returns an empty list for non-cyclic schedules.
    """
    if isinstance(schedule, PhasedSchedule):
        out = []
        bounds = [s for s, _ in schedule.phases[1:]] + [schedule.max_iter]
        for (start, spec), stop in zip(schedule.phases, bounds):
            if spec.cyclic:
                t = start + spec.start + spec.stepsize
                while t <= min(stop, max_iter):
                    out.append(t)
                    t += spec.stepsize
        return out
    if not schedule.cyclic:
        return []
    return list(range(schedule.start + schedule.stepsize, max_iter + 1, schedule.stepsize))


def stepsize_suggest(n_train: int, batchsize: int, epochs_per_step: float = 4) -> int:
    """Half-cycle length as a multiple of the iterations in one epoch.

    An epoch is ``ceil(n_train / batchsize)`` iterations, matching the number
    of minibatches the data pipeline yields per pass.
    """
    if batchsize < 1 or n_train < 1:
        raise ScheduleError("n_train and batchsize must be positive")
    if batchsize > n_train:
        raise ScheduleError(f"batchsize {batchsize} exceeds n_train {n_train}")
    per_epoch = -(-n_train // batchsize)
    return max(1, int(math.floor(epochs_per_step * per_epoch + 0.5)))

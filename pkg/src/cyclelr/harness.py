"""Deterministic training runs wired from data, model, optimizer and schedule.

A run is a pure function of its :class:`TrainConfig` (seed included). The
schedule is queried once per iteration; test accuracy is recorded every
``eval_every`` iterations, at every half-cycle boundary of a cyclic schedule
and at the final iteration.
"""

from __future__ import annotations

import math
import os
import statistics
from dataclasses import dataclass, field, replace

import numpy as np

from . import data, lr_finder, nn, optim
from ._io import atomic_write_text, csv_text, dumps
from .schedules import (
    PhasedSchedule,
    PolicySpec,
    Schedule,
    ScheduleError,
    half_cycle_boundaries,
    lr_at,
    stepsize_suggest,
)

DEFAULT_DATASET = {"kind": "two_moons", "n": 2000, "noise_sigma": 0.2, "seed": 0, "test_fraction": 0.2}
DEFAULT_CYCLES = 4


class HarnessError(ValueError):
    pass


def make_dataset(spec: dict | None) -> data.Dataset:
    spec = dict(DEFAULT_DATASET if spec is None else spec)
    kind = spec.pop("kind", "two_moons")
    if kind == "csv":
        if "path" not in spec:
            raise HarnessError("csv dataset needs a 'path'")
        path = spec.pop("path")
        try:
            return data.load_csv(path, **spec)
        except TypeError as exc:
            raise HarnessError(f"bad csv dataset options: {exc}") from None
        except OSError as exc:
            raise HarnessError(f"cannot read {path}: {exc.strerror}") from None
        except data.DataError as exc:
            raise HarnessError(str(exc)) from None
    if kind not in data.GENERATORS:
        raise HarnessError(f"unknown dataset kind {kind!r}; expected csv or one of {', '.join(data.GENERATORS)}")
    try:
        return data.GENERATORS[kind](**spec)
    except (TypeError, data.DataError) as exc:
        raise HarnessError(f"bad {kind} options: {exc}") from None


class Trainer:
    """One model + optimizer pair stepping through seeded minibatches."""

    def __init__(self, dataset: data.Dataset, model: nn.ModelSpec, optimizer: dict,
                 batchsize: int, seed: int):
        opt = dict(optimizer)
        kind = opt.pop("kind", "sgd")
        self.dataset = dataset
        self.model = nn.init(model, dataset.d, dataset.k, seed)
        self.state = optim.make_state(kind, self.model.size, **opt)
        self.batchsize = batchsize
        self.seed = seed
        self.iteration = 0
        self._x, self._y = dataset.features, dataset.labels
        self._x_test, self._y_test = dataset.x_test, dataset.y_test
        self._x_train, self._y_train = dataset.x_train, dataset.y_train
        self._epoch = 0
        self._queue: list[np.ndarray] = []
        if not 1 <= batchsize <= dataset.train_idx.shape[0]:
            raise HarnessError(f"batchsize {batchsize} outside [1, {dataset.train_idx.shape[0]}]")

    def _next_batch(self) -> np.ndarray:
        if not self._queue:
            self._queue = data.minibatches(self.dataset, self.batchsize, self.seed, self._epoch)[::-1]
            self._epoch += 1
        return self._queue.pop()

    def step(self, lr: float) -> float:
        """One optimizer step; returns the batch loss (NaN if it was non-finite)."""
        idx = self._next_batch()
        with np.errstate(all="ignore"):
            loss, grad = nn.loss_and_grad(self.model, self._x[idx], self._y[idx])
        if not math.isfinite(loss) or not np.isfinite(grad).all():
            return math.nan
        optim.step(self.model.params, grad, lr, self.state)
        self.iteration += 1
        return loss

    def evaluate(self) -> tuple[float, float]:
        """(loss, accuracy) on the test split."""
        with np.errstate(all="ignore"):
            return nn.evaluate(self.model, self._x_test, self._y_test)

    def train_loss(self) -> float:
        with np.errstate(all="ignore"):
            return nn.evaluate(self.model, self._x_train, self._y_train)[0]


@dataclass(frozen=True)
class TrainConfig:
    schedule: Schedule
    model: nn.ModelSpec = field(default_factory=nn.ModelSpec)
    optimizer: dict = field(default_factory=lambda: {"kind": "sgd"})
    dataset: dict = field(default_factory=lambda: dict(DEFAULT_DATASET))
    max_iter: int | None = None
    eval_every: int = 50
    batchsize: int = 50
    seed: int = 0
    stop_at_cycle_end: bool = False
    name: str | None = None

    def __post_init__(self):
        if self.eval_every < 1:
            raise HarnessError("eval_every must be positive")
        if self.batchsize < 1:
            raise HarnessError("batchsize must be positive")
        if self.max_iter is not None and self.max_iter < 0:
            raise HarnessError("max_iter must be non-negative")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        s = self.schedule
        if isinstance(s, PhasedSchedule):
            return f"{self.optimizer.get('kind', 'sgd')}/phased"
        return f"{self.optimizer.get('kind', 'sgd')}/{s.kind}"

    def resolved_max_iter(self) -> int:
        """Explicit ``max_iter``, else the phased length, else four full cycles."""
        s = self.schedule
        n = self.max_iter
        if n is None:
            if isinstance(s, PhasedSchedule):
                n = s.max_iter
            elif s.cyclic:
                n = s.start + DEFAULT_CYCLES * 2 * s.stepsize
            else:
                raise HarnessError("max_iter is required for non-cyclic schedules")
        if self.stop_at_cycle_end:
            n = last_cycle_end(s, n)
        return n


def last_cycle_end(schedule: Schedule, max_iter: int) -> int:
    """Latest completed-cycle iteration at or before ``max_iter``."""
    if isinstance(schedule, PhasedSchedule):
        start, spec = schedule.phases[-1]
    else:
        start, spec = 0, schedule
    if not spec.cyclic:
        raise HarnessError("stopping at a cycle end needs a cyclic schedule")
    origin = start + spec.start
    cycle = 2 * spec.stepsize
    if max_iter - origin < cycle:
        raise HarnessError("max_iter shorter than one cycle")
    return origin + (max_iter - origin) // cycle * cycle


def _row_lr(schedule: Schedule, t: int) -> float:
    # a phased schedule is undefined at its own max_iter; the final row reads
    # the last phase's policy one step past the end
    if isinstance(schedule, PhasedSchedule) and t >= schedule.max_iter:
        start, spec = schedule.phases[-1]
        return lr_at(t - start, spec)
    return lr_at(t, schedule)


@dataclass
class MetricLog:
    rows: list[tuple[int, float, float, float]]
    diverged: bool = False
    name: str = ""
    notes: list[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = ("iter", "lr", "train_loss", "test_acc").index(name)
        return np.array([r[i] for r in self.rows])

    @property
    def final_accuracy(self) -> float:
        return self.rows[-1][3]

    @property
    def final_iter(self) -> int:
        return self.rows[-1][0]

    def best(self) -> tuple[int, float]:
        it, acc = max(((r[0], r[3]) for r in self.rows), key=lambda p: (p[1], -p[0]))
        return it, acc

    def accuracy_at(self, it: int) -> float:
        for r in self.rows:
            if r[0] == it:
                return r[3]
        raise KeyError(it)

    def iterations_to(self, threshold: float) -> int | None:
        for r in self.rows:
            if r[3] >= threshold:
                return r[0]
        return None

    def summary(self) -> dict:
        best_iter, best_acc = self.best()
        return {
            "name": self.name,
            "final_iter": self.final_iter,
            "final_accuracy": self.final_accuracy,
            "best_accuracy": best_acc,
            "best_iter": best_iter,
            "diverged": self.diverged,
        }

    def to_csv(self) -> str:
        return csv_text(("iter", "lr", "train_loss", "test_acc"), self.rows)

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())


def train(config: TrainConfig, dataset: data.Dataset | None = None) -> MetricLog:
    """Run ``max_iter`` steps; a non-finite loss stops the run and flags it diverged."""
    ds = dataset if dataset is not None else make_dataset(config.dataset)
    trainer = Trainer(ds, config.model, config.optimizer, config.batchsize, config.seed)
    sched = config.schedule
    n = config.resolved_max_iter()
    evals = set(range(0, n + 1, config.eval_every)) | set(half_cycle_boundaries(sched, n)) | {n}
    log = MetricLog([], name=config.label)

    def record(t):
        _, acc = trainer.evaluate()
        log.rows.append((t, _row_lr(sched, t), trainer.train_loss(), acc))

    record(0)
    for t in range(n):
        loss = trainer.step(lr_at(t, sched))
        if not math.isfinite(loss):
            log.diverged = True
            log.notes.append(f"non-finite loss at iteration {t}")
            break
        if t + 1 in evals:
            record(t + 1)
    return log


def _median(xs):
    return float(statistics.median(xs))


def compare(configs: list[TrainConfig], seeds: list[int], threshold: float | None = None,
            log_dir=None) -> list[dict]:
    """Median/mean final accuracy per config over seeds, plus iterations to ``threshold``.

    With no threshold given, the lowest per-config median final accuracy is
    used, so every config is measured against a level it typically reaches.
    With ``log_dir`` set, each run's log is written there as
    ``<label>_seed<seed>.csv`` (``/`` in labels becomes ``_``).
    """
    if not configs or not seeds:
        raise HarnessError("compare needs at least one config and one seed")
    runs = {}
    datasets: dict[str, data.Dataset] = {}
    for cfg in configs:
        key = repr(sorted(cfg.dataset.items()))
        if key not in datasets:
            datasets[key] = make_dataset(cfg.dataset)
        runs[id(cfg)] = [train(replace(cfg, seed=s), datasets[key]) for s in seeds]
        if log_dir is not None:
            os.makedirs(log_dir, exist_ok=True)
            stem = cfg.label.replace("/", "_").replace(os.sep, "_")
            for s, log in zip(seeds, runs[id(cfg)]):
                log.write_csv(os.path.join(log_dir, f"{stem}_seed{s}.csv"))
    if threshold is None:
        threshold = min(_median([l.final_accuracy for l in runs[id(c)]]) for c in configs)
    out = []
    for cfg in configs:
        logs = runs[id(cfg)]
        finals = [l.final_accuracy for l in logs]
        reach = [l.iterations_to(threshold) for l in logs]
        hit = [r for r in reach if r is not None]
        out.append({
            "name": cfg.label,
            "seeds": list(seeds),
            "final_accuracies": finals,
            "median_final_accuracy": _median(finals),
            "mean_final_accuracy": float(np.mean(finals)),
            "median_best_accuracy": _median([l.best()[1] for l in logs]),
            "final_iter": logs[0].final_iter,
            "threshold": threshold,
            "iterations_to_threshold": reach,
            "median_iterations_to_threshold": _median(hit) if len(hit) * 2 > len(reach) else None,
            "diverged_runs": sum(l.diverged for l in logs),
        })
    return out


@dataclass
class WorkflowResult:
    bounds: lr_finder.BoundEstimate
    trace: lr_finder.RangeTestTrace
    config: TrainConfig
    log: MetricLog


def range_test(dataset: data.Dataset, model: nn.ModelSpec, optimizer: dict, batchsize: int,
               seed: int, cfg: lr_finder.RangeTestConfig, smooth_window: int = 5) -> lr_finder.RangeTestTrace:
    trainer = Trainer(dataset, model, optimizer, batchsize, seed)
    trace = lr_finder.run_range_test(trainer, cfg)
    if len(trace) < smooth_window:
        return trace
    return lr_finder.smooth(trace, smooth_window)


def clr_workflow(dataset: dict | None = None, model: nn.ModelSpec | None = None,
                 optimizer: dict | None = None, *, seed: int = 0, batchsize: int = 50,
                 range_cfg: lr_finder.RangeTestConfig | None = None, max_iter: int | None = None,
                 epochs_per_step: float = 4, eval_every: int = 50, estimate: dict | None = None,
                 smooth_window: int = 5) -> WorkflowResult:
    """Range test, bound estimate, stepsize from the epoch length, then a triangular run.

    Training stops at the end of the last complete cycle within ``max_iter``
    (four cycles when unset).
    """
    dataset = dict(DEFAULT_DATASET) if dataset is None else dataset
    model = model or nn.ModelSpec()
    optimizer = optimizer or {"kind": "sgd"}
    range_cfg = range_cfg or lr_finder.RangeTestConfig()
    ds = make_dataset(dataset)
    trace = range_test(ds, model, optimizer, batchsize, seed, range_cfg, smooth_window)
    try:
        bounds = lr_finder.estimate_bounds(trace, smooth_window=smooth_window, **(estimate or {}))
    except lr_finder.NeverConvergedError as exc:
        raise lr_finder.NeverConvergedError(
            f"{str(exc).split(': ', 1)[-1]}; widen the tested range (--lr-start/--lr-end) "
            "or run more range-test iterations") from None
    stepsize = stepsize_suggest(ds.train_idx.shape[0], batchsize, epochs_per_step)
    if max_iter is None:
        max_iter = DEFAULT_CYCLES * 2 * stepsize
    if max_iter < 2 * stepsize:
        raise HarnessError("max_iter shorter than one cycle")
    cfg = TrainConfig(
        schedule=PolicySpec("triangular", bounds.base_lr, bounds.max_lr, stepsize),
        model=model, optimizer=optimizer, dataset=dataset, max_iter=max_iter,
        eval_every=eval_every, batchsize=batchsize, seed=seed, stop_at_cycle_end=True,
        name=f"{optimizer.get('kind', 'sgd')}/clr",
    )
    return WorkflowResult(bounds, trace, cfg, train(cfg, ds))


@dataclass
class PeakPhaseReport:
    rows: list[tuple[int, int, float, int, float]]  # cycle, end iter, end acc, mid iter, mid acc
    fraction: float

    def to_dict(self) -> dict:
        return {
            "fraction_end_ge_mid": self.fraction,
            "cycles": [dict(zip(("cycle", "end_iter", "end_acc", "mid_iter", "mid_acc"), r)) for r in self.rows],
        }


def peak_phase_report(log: MetricLog, schedule: Schedule) -> PeakPhaseReport:
    """Per cycle: accuracy at the cycle end (lowest rate) vs mid-cycle (highest rate)."""
    if isinstance(schedule, PhasedSchedule) or not schedule.cyclic:
        raise HarnessError("peak-phase analysis needs a single cyclic policy")
    acc = {r[0]: r[3] for r in log.rows}
    s, origin = schedule.stepsize, schedule.start
    rows = []
    k = 1
    while origin + 2 * k * s <= log.final_iter:
        end, mid = origin + 2 * k * s, origin + (2 * k - 1) * s
        if end not in acc or mid not in acc:
            raise HarnessError(f"log lacks the cycle-boundary evaluations for cycle {k}")
        rows.append((k, end, acc[end], mid, acc[mid]))
        k += 1
    if not rows:
        raise HarnessError("the log does not cover a complete cycle")
    frac = sum(r[2] >= r[4] for r in rows) / len(rows)
    return PeakPhaseReport(rows, frac)


__all__ = [
    "Trainer", "TrainConfig", "MetricLog", "train", "compare", "clr_workflow",
    "peak_phase_report", "range_test", "make_dataset", "last_cycle_end", "ScheduleError",
]

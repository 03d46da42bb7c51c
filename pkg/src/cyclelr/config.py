"""JSON experiment files.

A config has up to six top-level sections; every key inside them is checked
and an unknown one is an error naming it::

    {
      "name": "sgd/triangular",
      "dataset":   {"kind": "two_moons", "n": 2000, "noise_sigma": 0.2, "seed": 0, "test_fraction": 0.2},
      "model":     {"hidden": [32, 32], "activation": "relu", "batchnorm": false},
      "optimizer": {"kind": "sgd"},
      "schedule":  {"kind": "triangular", "base_lr": 0.06, "max_lr": 0.9, "stepsize": 128},
      "run":       {"max_iter": 1024, "eval_every": 50, "batchsize": 50, "seed": 0,
                    "stop_at_cycle_end": false},
      "range_test": {"lr_start": 0.001, "lr_end": 8.0, "num_iters": 400, "eval_every": 2,
                     "metric": "accuracy", "smooth_window": 5, "rise_eps": 0.02,
                     "fall_eps": 0.05, "ragged_window": 7, "ragged_eps": 0.03}
    }

``schedule`` may instead hold ``{"phases": [{"start_iter": 0, ...}, ...], "max_iter": N}``.
Every section is optional; omitted values take the defaults shown above
(``schedule`` is required only for training).
"""

from __future__ import annotations

import inspect
import json
import os
from dataclasses import dataclass, field

from . import data, lr_finder, nn, optim
from .harness import DEFAULT_DATASET, TrainConfig
from .schedules import ScheduleError, schedule_from_dict

SECTIONS = ("name", "dataset", "model", "optimizer", "schedule", "run", "range_test")
RUN_KEYS = {"max_iter": None, "eval_every": 50, "batchsize": 50, "seed": None, "stop_at_cycle_end": False}
RANGE_KEYS = ("lr_start", "lr_end", "num_iters", "eval_every", "metric")
ESTIMATE_KEYS = {"smooth_window": 5, "rise_eps": 0.02, "fall_eps": 0.05, "ragged_window": 7, "ragged_eps": 0.03}
SEED_ENV = "CYCLELR_SEED"


class ConfigError(ValueError):
    pass


def _reject_unknown(section: str, d: dict, allowed):
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in section {section!r}")


def _dataset_keys(kind: str):
    if kind == "csv":
        return {"kind", "path", "label_column", "test_fraction", "seed"}
    if kind not in data.GENERATORS:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    return {"kind"} | set(inspect.signature(data.GENERATORS[kind]).parameters)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


@dataclass
class Experiment:
    name: str | None = None
    dataset: dict = field(default_factory=lambda: dict(DEFAULT_DATASET))
    model: nn.ModelSpec = field(default_factory=nn.ModelSpec)
    optimizer: dict = field(default_factory=lambda: {"kind": "sgd"})
    schedule: dict | None = None
    run: dict = field(default_factory=lambda: dict(RUN_KEYS))
    range_test: dict = field(default_factory=dict)

    def seed(self, override: int | None = None) -> int:
        if override is not None:
            return override
        if self.run.get("seed") is not None:
            return int(self.run["seed"])
        return default_seed()

    def train_config(self, seed: int | None = None) -> TrainConfig:
        if self.schedule is None:
            raise ConfigError("the config has no 'schedule' section")
        try:
            sched = schedule_from_dict(self.schedule)
        except (ScheduleError, TypeError) as exc:
            raise ConfigError(f"schedule: {exc}") from None
        return TrainConfig(
            schedule=sched, model=self.model, optimizer=dict(self.optimizer), dataset=dict(self.dataset),
            max_iter=self.run["max_iter"], eval_every=int(self.run["eval_every"]),
            batchsize=int(self.run["batchsize"]), seed=self.seed(seed),
            stop_at_cycle_end=bool(self.run["stop_at_cycle_end"]), name=self.name,
        )

    def range_config(self) -> lr_finder.RangeTestConfig:
        kw = {k: v for k, v in self.range_test.items() if k in RANGE_KEYS}
        try:
            return lr_finder.RangeTestConfig(**kw)
        except lr_finder.RangeTestError as exc:
            raise ConfigError(f"range_test: {exc}") from None

    def estimate_options(self) -> dict:
        out = dict(ESTIMATE_KEYS)
        out.update({k: v for k, v in self.range_test.items() if k in ESTIMATE_KEYS})
        return out


def parse(doc: dict) -> Experiment:
    _reject_unknown("top level", doc, SECTIONS)
    exp = Experiment()
    if "name" in doc:
        exp.name = str(doc["name"])
    if "dataset" in doc:
        ds = dict(doc["dataset"])
        _reject_unknown("dataset", ds, _dataset_keys(ds.get("kind", "two_moons")))
        exp.dataset = ds
    if "model" in doc:
        _reject_unknown("model", doc["model"], nn.ModelSpec.__dataclass_fields__)
        try:
            exp.model = nn.ModelSpec.from_dict(doc["model"])
        except nn.ModelError as exc:
            raise ConfigError(f"model: {exc}") from None
    if "optimizer" in doc:
        opt = dict(doc["optimizer"])
        kind = opt.get("kind", "sgd")
        if kind not in optim.KINDS:
            raise ConfigError(f"unknown optimizer kind {kind!r}")
        _reject_unknown("optimizer", opt, {"kind"} | set(optim.DEFAULTS[kind]))
        opt["kind"] = kind
        exp.optimizer = opt
    if "schedule" in doc:
        exp.schedule = dict(doc["schedule"])
        try:
            schedule_from_dict(exp.schedule)
        except ScheduleError as exc:
            raise ConfigError(f"schedule: {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"schedule: {exc}") from None
    if "run" in doc:
        _reject_unknown("run", doc["run"], RUN_KEYS)
        exp.run.update(doc["run"])
    if "range_test" in doc:
        _reject_unknown("range_test", doc["range_test"], set(RANGE_KEYS) | set(ESTIMATE_KEYS))
        exp.range_test = dict(doc["range_test"])
    return exp


def load(path) -> Experiment:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse(doc)


def dump(exp: Experiment) -> dict:
    out = {"dataset": exp.dataset, "model": exp.model.to_dict(), "optimizer": exp.optimizer,
           "run": exp.run}
    if exp.name:
        out["name"] = exp.name
    if exp.schedule is not None:
        out["schedule"] = exp.schedule
    if exp.range_test:
        out["range_test"] = exp.range_test
    return out

"""``cyclelr`` command line.

Exit codes: 0 success, 2 usage or config error, 3 analysis failure (the range
test found no usable bounds), 4 a training run diverged.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import replace

from . import __version__, config as cfgmod, data, harness, lr_finder, nn, optim, plot
from ._io import atomic_write_text, csv_text, dumps
from .schedules import KINDS, WINDOWS, PhasedSchedule, PolicySpec, ScheduleError, lr_series, schedule_from_dict

EXIT_OK, EXIT_USAGE, EXIT_ANALYSIS, EXIT_DIVERGED = 0, 2, 3, 4

_FLAG_FOR = {"max_lr": "--max", "stepsize": "--stepsize", "gamma": "--gamma", "base_lr": "--base"}
_NEEDS = {
    "fixed": (), "exp": ("gamma",), "decay": ("max_lr", "stepsize"),
    "triangular": ("max_lr", "stepsize"), "triangular2": ("max_lr", "stepsize"),
    "exp_range": ("max_lr", "stepsize", "gamma"),
}

CONFIG_HELP = """\
config files are JSON with optional sections dataset, model, optimizer,
schedule, run, range_test (and a top-level name). Defaults:
  dataset    two_moons n=2000 noise_sigma=0.2 seed=0 test_fraction=0.2
  model      hidden=[32, 32] activation=relu batchnorm=false
  optimizer  sgd (nesterov mu=0.9; adagrad eps=1e-10; rmsprop rho=0.99 eps=1e-8;
             adadelta rho=0.95 eps=1e-6; adam beta1=0.9 beta2=0.999 eps=1e-8)
  run        max_iter=4 cycles for cyclic schedules, eval_every=50, batchsize=50,
             seed from --seed, else run.seed, else $CYCLELR_SEED, else 0
  range_test lr_start=0.001 lr_end=8 num_iters=400 eval_every=2 metric=accuracy
             smooth_window=5 rise_eps=0.02 fall_eps=0.05 ragged_window=7 ragged_eps=0.03
Unknown keys are rejected."""


class UsageError(Exception):
    pass


def _fail(code, msg):
    print(f"cyclelr: {msg}", file=sys.stderr)
    return code


# -- argument helpers --------------------------------------------------------

def _add_policy_flags(p, for_override=False):
    g = p.add_argument_group("schedule" + (" overrides (applied on top of the config)" if for_override else ""))
    g.add_argument("--policy", choices=KINDS, help="learning-rate policy")
    g.add_argument("--base", type=float, help="base_lr (lower bound / fixed rate)")
    g.add_argument("--max", type=float, help="max_lr (upper bound)")
    g.add_argument("--stepsize", type=int, help="iterations per half cycle")
    g.add_argument("--gamma", type=float, help="decay factor per iteration for exp / exp_range")
    g.add_argument("--start", type=int, help="iteration offset before the policy starts (default 0)")
    g.add_argument("--window", choices=WINDOWS, help="cycle shape (default triangular)")


def _policy_overrides(args) -> dict:
    pairs = {"kind": args.policy, "base_lr": args.base, "max_lr": args.max, "stepsize": args.stepsize,
             "gamma": args.gamma, "start": args.start, "window": args.window}
    return {k: v for k, v in pairs.items() if v is not None}


def _spec_from_flags(args, base: dict | None = None) -> PolicySpec:
    d = dict(base or {})
    d.update(_policy_overrides(args))
    if "kind" not in d:
        raise UsageError("--policy is required")
    if "base_lr" not in d:
        raise UsageError("--base is required")
    for key in _NEEDS[d["kind"]]:
        if d.get(key) is None:
            raise UsageError(f"{_FLAG_FOR[key]} is required for policy {d['kind']}")
    try:
        return PolicySpec.from_dict(d)
    except ScheduleError as exc:
        raise UsageError(str(exc)) from None


def _apply_overrides(exp: cfgmod.Experiment, args) -> None:
    over = _policy_overrides(args)
    if over:
        if exp.schedule is not None and "phases" in exp.schedule:
            raise UsageError("schedule flags cannot override a phased schedule")
        base = dict(exp.schedule or {})
        if "kind" in over and over["kind"] != base.get("kind"):
            # carry over only what the new policy uses
            keep = {"base_lr", "start", "window", *_NEEDS[over["kind"]]}
            base = {k: v for k, v in base.items() if k in keep}
        exp.schedule = _spec_from_flags(args, base).to_dict()
    for flag, key in (("max_iter", "max_iter"), ("eval_every", "eval_every"), ("batchsize", "batchsize")):
        v = getattr(args, flag, None)
        if v is not None:
            exp.run[key] = v
    if getattr(args, "stop_at_cycle_end", False):
        exp.run["stop_at_cycle_end"] = True


def _add_run_flags(p):
    g = p.add_argument_group("run overrides")
    g.add_argument("--max-iter", dest="max_iter", type=int, help="training iterations")
    g.add_argument("--eval-every", dest="eval_every", type=int, help="iterations between evaluations")
    g.add_argument("--batchsize", type=int, help="minibatch size")
    g.add_argument("--stop-at-cycle-end", action="store_true", help="truncate to the last complete cycle")


def _load(path) -> cfgmod.Experiment:
    if path is None:
        return cfgmod.Experiment()
    return cfgmod.load(path)


def _write_or_print(text, path):
    if path:
        atomic_write_text(path, text)
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------

def cmd_schedule(args) -> int:
    if args.config:
        exp = _load(args.config)
        if exp.schedule is None and not _policy_overrides(args):
            raise UsageError(f"{args.config} has no schedule section")
        if _policy_overrides(args):
            _apply_overrides(exp, args)
        sched = schedule_from_dict(exp.schedule)
    else:
        sched = _spec_from_flags(args)
    if args.iters < 0:
        raise UsageError("--iters must be non-negative")
    if isinstance(sched, PhasedSchedule) and args.iters > sched.max_iter:
        raise UsageError(f"--iters {args.iters} exceeds the phased schedule's max_iter {sched.max_iter}")
    lrs = lr_series(sched, args.iters)
    sys.stdout.write(csv_text(("iter", "lr"), ((i, v) for i, v in enumerate(lrs))))
    return EXIT_OK


def _range_overrides(exp, args):
    rt = dict(exp.range_test)
    for flag, key in (("lr_start", "lr_start"), ("lr_end", "lr_end"), ("iters", "num_iters"),
                      ("range_eval_every", "eval_every"), ("metric", "metric"), ("smooth", "smooth_window"),
                      ("rise_eps", "rise_eps"), ("fall_eps", "fall_eps"), ("ragged_window", "ragged_window"),
                      ("ragged_eps", "ragged_eps")):
        v = getattr(args, flag, None)
        if v is not None:
            rt[key] = v
    exp.range_test = rt


def cmd_range_test(args) -> int:
    exp = _load(args.config)
    _range_overrides(exp, args)
    rc = exp.range_config()
    est = exp.estimate_options()
    seed = exp.seed(args.seed)
    batchsize = int(args.batchsize or exp.run["batchsize"])
    ds = harness.make_dataset(exp.dataset)
    trace = harness.range_test(ds, exp.model, exp.optimizer, batchsize, seed, rc, est["smooth_window"])
    if args.out:
        trace.write_csv(args.out)
    try:
        bounds = lr_finder.estimate_bounds(trace, **est)
    except lr_finder.NeverConvergedError as exc:
        return _fail(EXIT_ANALYSIS, f"{exc}; try a different --lr-start/--lr-end range")
    result = bounds.to_dict()
    result["diverged"] = trace.diverged
    result["rows"] = len(trace)
    if args.rule_of_thumb:
        result["rule_of_thumb"] = lr_finder.rule_of_thumb(bounds.max_lr, args.rule_of_thumb).to_dict()
    sys.stdout.write(dumps(result))
    return EXIT_OK


def cmd_train(args) -> int:
    exp = _load(args.config)
    _apply_overrides(exp, args)
    tc = exp.train_config(args.seed)
    try:
        tc.resolved_max_iter()
    except harness.HarnessError as exc:
        raise UsageError(str(exc)) from None
    log = harness.train(tc)
    if args.out:
        log.write_csv(args.out)
    summary = log.summary()
    if isinstance(tc.schedule, PolicySpec) and tc.schedule.cyclic:
        try:
            summary["peak_phase"] = harness.peak_phase_report(log, tc.schedule).to_dict()
        except harness.HarnessError:
            pass
    _write_or_print(dumps(summary), args.summary)
    if log.diverged:
        return _fail(EXIT_DIVERGED, f"training diverged ({'; '.join(log.notes)}); partial log kept")
    return EXIT_OK


def cmd_compare(args) -> int:
    configs = []
    for path in args.configs:
        exp = _load(path)
        _apply_overrides(exp, args)
        tc = exp.train_config(args.seeds[0] if args.seeds else None)
        if tc.name is None:
            tc = replace(tc, name=os.path.splitext(os.path.basename(path))[0])
        try:
            tc.resolved_max_iter()
        except harness.HarnessError as exc:
            raise UsageError(f"{path}: {exc}") from None
        configs.append(tc)
    seeds = args.seeds or [configs[0].seed]
    summary = harness.compare(configs, seeds, args.threshold, log_dir=args.log_dir)
    _write_or_print(dumps(summary), args.out)
    bad = sum(s["diverged_runs"] for s in summary)
    if bad:
        return _fail(EXIT_DIVERGED, f"{bad} run(s) diverged")
    return EXIT_OK


def cmd_workflow(args) -> int:
    exp = _load(args.config)
    _range_overrides(exp, args)
    est = exp.estimate_options()
    sw = est.pop("smooth_window")
    try:
        res = harness.clr_workflow(
            exp.dataset, exp.model, exp.optimizer, seed=exp.seed(args.seed),
            batchsize=int(args.batchsize or exp.run["batchsize"]), range_cfg=exp.range_config(),
            max_iter=args.max_iter if args.max_iter is not None else exp.run.get("max_iter"),
            epochs_per_step=args.epochs_per_step, eval_every=int(exp.run["eval_every"]),
            estimate=est, smooth_window=sw)
    except lr_finder.NeverConvergedError as exc:
        return _fail(EXIT_ANALYSIS, str(exc))
    except harness.HarnessError as exc:
        raise UsageError(str(exc)) from None
    if args.trace:
        res.trace.write_csv(args.trace)
    if args.out:
        res.log.write_csv(args.out)
    out = {"bounds": res.bounds.to_dict(), "schedule": res.config.schedule.to_dict(),
           "summary": res.log.summary(),
           "peak_phase": harness.peak_phase_report(res.log, res.config.schedule).to_dict()}
    sys.stdout.write(dumps(out))
    if res.log.diverged:
        return _fail(EXIT_DIVERGED, "training diverged; partial log kept")
    return EXIT_OK


def _read_columns(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise UsageError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    cols = {h: [] for h in header}
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise UsageError(f"{path}:{lineno}: expected {len(header)} fields")
        for h, v in zip(header, row):
            try:
                cols[h].append(float(v) if v != "" else math.nan)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: non-numeric value {v!r} in column {h!r}") from None
    return cols


def cmd_plot(args) -> int:
    cols = _read_columns(args.csv)
    for name in [args.x] + args.y:
        if name not in cols:
            raise UsageError(f"no column {name!r} in {args.csv} (have: {', '.join(cols)})")
    series = [(y, cols[args.x], cols[y]) for y in args.y]
    svg = plot.line_chart(series, args.x, ", ".join(args.y), args.title or "")
    atomic_write_text(args.out, svg)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _add_range_flags(p):
    g = p.add_argument_group("range test")
    g.add_argument("--lr-start", dest="lr_start", type=float, help="first rate of the sweep (default 0.001)")
    g.add_argument("--lr-end", dest="lr_end", type=float, help="last rate of the sweep (default 8.0)")
    g.add_argument("--iters", type=int, help="sweep length in iterations (default 400)")
    g.add_argument("--range-eval-every", dest="range_eval_every", type=int,
                   help="iterations between metric samples (default 2)")
    g.add_argument("--metric", choices=lr_finder.METRICS, help="curve to analyse (default accuracy)")
    g.add_argument("--smooth", type=int, help="odd moving-average window (default 5)")
    g.add_argument("--rise-eps", dest="rise_eps", type=float, help="onset threshold, fraction of metric span (default 0.02)")
    g.add_argument("--fall-eps", dest="fall_eps", type=float, help="fall threshold, fraction of metric span (default 0.05)")
    g.add_argument("--ragged-window", dest="ragged_window", type=int, help="rows in the raggedness window (default 7)")
    g.add_argument("--ragged-eps", dest="ragged_eps", type=float, help="raggedness threshold, fraction of metric span (default 0.03)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(prog="cyclelr", description="Cyclical learning-rate toolkit.",
                                epilog=CONFIG_HELP, formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("schedule", help="print a schedule as iter,lr CSV", formatter_class=fmt)
    s.add_argument("--config", help="take the schedule section of this config")
    s.add_argument("--iters", type=int, default=1, help="number of rows, iterations 0..N-1 (default 1)")
    _add_policy_flags(s)
    s.set_defaults(func=cmd_schedule)

    r = sub.add_parser("range-test", help="run the LR range test and estimate bounds",
                       epilog=CONFIG_HELP, formatter_class=fmt)
    r.add_argument("config", nargs="?", help="experiment config (defaults used if omitted)")
    r.add_argument("--out", help="write the trace CSV here")
    r.add_argument("--seed", type=int)
    r.add_argument("--batchsize", type=int)
    r.add_argument("--rule-of-thumb", dest="rule_of_thumb", type=int, choices=(3, 4),
                   help="also report base_lr = max_lr / N")
    _add_range_flags(r)
    r.set_defaults(func=cmd_range_test)

    t = sub.add_parser("train", help="train once and log metrics", epilog=CONFIG_HELP, formatter_class=fmt)
    t.add_argument("config")
    t.add_argument("--out", help="write the metric log CSV here")
    t.add_argument("--summary", help="write the JSON summary here instead of standard output")
    t.add_argument("--seed", type=int)
    _add_policy_flags(t, for_override=True)
    _add_run_flags(t)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compare", help="train several configs over several seeds",
                       epilog=CONFIG_HELP, formatter_class=fmt)
    c.add_argument("configs", nargs="+")
    c.add_argument("--seeds", type=int, nargs="+", help="seeds to run (default: the config seed)")
    c.add_argument("--threshold", type=float,
                   help="accuracy level for iterations-to-threshold (default: lowest median final accuracy)")
    c.add_argument("--out", help="write the JSON summary here instead of standard output")
    c.add_argument("--log-dir", dest="log_dir", help="write one CSV log per run into this directory")
    _add_policy_flags(c, for_override=True)
    _add_run_flags(c)
    c.set_defaults(func=cmd_compare)

    w = sub.add_parser("workflow", help="range test, bounds, stepsize, then a triangular run",
                       epilog=CONFIG_HELP, formatter_class=fmt)
    w.add_argument("config", nargs="?")
    w.add_argument("--out", help="write the training log CSV here")
    w.add_argument("--trace", help="write the range-test trace CSV here")
    w.add_argument("--seed", type=int)
    w.add_argument("--batchsize", type=int)
    w.add_argument("--max-iter", dest="max_iter", type=int, help="iteration budget (default 4 cycles)")
    w.add_argument("--epochs-per-step", dest="epochs_per_step", type=float, default=4.0,
                   help="stepsize in epochs (default 4)")
    _add_range_flags(w)
    w.set_defaults(func=cmd_workflow)

    pl = sub.add_parser("plot", help="SVG line chart of CSV columns", formatter_class=fmt)
    pl.add_argument("csv")
    pl.add_argument("--x", default="iter", help="x column (default iter)")
    pl.add_argument("--y", action="append", help="y column, repeatable (default test_acc)")
    pl.add_argument("--out", required=True, help="output SVG path")
    pl.add_argument("--title")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "y", None) is None and args.command == "plot":
        args.y = ["test_acc"]
    try:
        return args.func(args)
    except (UsageError, cfgmod.ConfigError, ScheduleError, harness.HarnessError, lr_finder.RangeTestError,
            data.DataError, nn.ModelError, optim.OptimizerError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

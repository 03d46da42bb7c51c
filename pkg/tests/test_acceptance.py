"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The desk-scale claims (7 to 10) use the default task: two_moons n=2000,
noise 0.2, relu MLP [32, 32], minibatch 50, five seeds. Bounds come from the
range test, stepsize is four epochs (128 iterations) and CLR runs four full
cycles (1024 iterations).
"""

import json
import statistics
import time

import numpy as np
import pytest

from cyclelr import cli, harness, lr_finder, nn, optim
from cyclelr import schedules as S
from cyclelr.schedules import PolicySpec

from oracles import planted_curve, rel_err, torch_form_bound, walk_schedules

SEEDS = range(5)
RESULTS = []  # (number, passed, detail) for the terminal summary


def report(n, passed, detail):
    line = f"acceptance {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    RESULTS.append(line)
    assert passed, line


def median(xs):
    return float(statistics.median(xs))


# -- 1 -----------------------------------------------------------------------

def _random_specs(rng, count):
    specs = []
    for i in range(count):
        kind = S.KINDS[i % len(S.KINDS)]
        base = float(10 ** rng.uniform(-6, 0))
        d = {"kind": kind, "base_lr": base, "window": S.WINDOWS[rng.integers(3)],
             "start": int(rng.integers(0, 2000)) if rng.random() < 0.3 else 0}
        if kind in ("decay", "triangular", "triangular2", "exp_range"):
            d["max_lr"] = base * float(10 ** rng.uniform(0, 2))
            d["stepsize"] = int(10 ** rng.uniform(0, 3.7))
        if kind in ("exp", "exp_range"):
            d["gamma"] = float(1 - 10 ** rng.uniform(-7, -2))
        specs.append(d)
    return specs


def test_1_schedule_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2015)
    specs = _random_specs(rng, 1000)
    samples = np.sort(rng.integers(0, 20000, size=(1000, 100)), axis=1)
    walked = walk_schedules(specs, samples)
    closed = np.array([S.lr_series(PolicySpec.from_dict(d), row) for d, row in zip(specs, samples)])
    worst = float(rel_err(closed, walked).max())

    # the Torch listing rounds te/stepsize before subtracting; it must agree with
    # the integer-ramp closed form to within that rounding at every sampled point
    forms_ok, forms_worst = True, 0.0
    for d, row in zip(specs, samples):
        if d["kind"] != "triangular":
            continue
        spec = PolicySpec.from_dict(d)
        a = np.array([S.lr_triangular(int(t), spec) for t in row])
        b = np.array([S.lr_triangular_torch(int(t), spec) for t in row])
        forms_ok &= bool((np.abs(a - b) <= torch_form_bound(spec, row)).all())
        forms_worst = max(forms_worst, float(rel_err(b, a).max()))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-12 and forms_ok and elapsed < 5.0,
           f"{samples.size} pairs, max rel err {worst:.2e}; torch listing within rounding bound: {forms_ok} "
           f"(max rel gap {forms_worst:.1e}); {elapsed:.2f} s")


# -- 2 -----------------------------------------------------------------------

def test_2_pinned_values():
    tri = PolicySpec("triangular", 0.001, 0.006, 2000)
    t2 = S.reference_phased_schedule()
    checks = {
        "lr_triangular(0)": S.lr_triangular(0, tri) == 0.001,
        "lr_triangular(2000)": S.lr_triangular(2000, tri) == 0.006,
        "lr_phased(0)": S.lr_phased(0, t2) == 0.001,
        "lr_phased(16000)": S.lr_phased(16000, t2) == 0.0001,
        "lr_decay(0)": S.lr_decay(0, PolicySpec("decay", 0.001, 0.007, 10000)) == 0.007,
        "stepsize_suggest": S.stepsize_suggest(50000, 100, 4) == 2000,
    }
    bad = [k for k, ok in checks.items() if not ok]
    report(2, not bad, "all exact" if not bad else f"mismatch: {', '.join(bad)}")


# -- 3 -----------------------------------------------------------------------

def test_3_triangular2_halving():
    base, mx, s = 0.001, 0.005, 2000
    spec = PolicySpec("triangular2", base, mx, s)
    lrs = S.lr_series(spec, 20 * s + 1)
    worst = 0.0
    for k in range(1, 11):
        cycle = lrs[2 * (k - 1) * s: 2 * k * s + 1]
        amp = cycle.max() - cycle.min()
        worst = max(worst, abs(amp - (mx - base) / 2 ** (k - 1)) / ((mx - base) / 2 ** (k - 1)))
    report(3, worst <= 1e-15, f"k=1..10, max rel err {worst:.2e}")


# -- 4 -----------------------------------------------------------------------

def test_4_range_test_bound_recovery():
    t0 = time.perf_counter()
    window, ragged_eps = 5, 0.03
    hits = 0
    for i in range(50):
        rng = np.random.default_rng(4000 + i)
        lrs, y, bk, mk = planted_curve(rng)
        y = y + (ragged_eps / 4) * (y.max() - y.min()) * rng.standard_normal(y.size)
        trace = lr_finder.RangeTestTrace(np.arange(y.size), lrs, y)
        est = lr_finder.estimate_bounds(trace, ragged_eps=ragged_eps, smooth_window=window)
        b = int(np.argmin(np.abs(lrs - est.base_lr)))
        m = int(np.argmin(np.abs(lrs - est.max_lr)))
        hits += abs(b - bk) <= window and abs(m - mk) <= window
    elapsed = time.perf_counter() - t0
    report(4, hits >= 45 and elapsed < 5.0, f"{hits}/50 within {window} rows; {elapsed:.2f} s")


# -- 5 -----------------------------------------------------------------------

def test_5_gradient_checks():
    t0 = time.perf_counter()
    models = {
        "linear": nn.ModelSpec(hidden=()),
        "relu-MLP": nn.ModelSpec(hidden=(8, 6)),
        "sigmoid-MLP": nn.ModelSpec(hidden=(8, 6), activation="sigmoid"),
        "sigmoid+batchnorm": nn.ModelSpec(hidden=(8, 6), activation="sigmoid", batchnorm=True),
    }
    worst_rel, worst_abs = {}, {}
    for name, spec in models.items():
        worst_rel[name] = worst_abs[name] = 0.0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            model = nn.init(spec, 4, 3, seed)
            # random state: trained weights are not at init and relu kinks sit off zero
            model.params += 0.1 * rng.standard_normal(model.size)
            x = rng.standard_normal((16, 4))
            y = rng.integers(0, 3, 16)
            r = nn.grad_check(model, x, y, abs_floor=1e-8)
            scale = np.maximum(np.abs(r.analytic), np.abs(r.numeric))
            diff = np.abs(r.analytic - r.numeric)
            zero = scale < 1e-8
            if (~zero).any():
                worst_rel[name] = max(worst_rel[name], float((diff[~zero] / scale[~zero]).max()))
            if zero.any():
                worst_abs[name] = max(worst_abs[name], float(diff[zero].max()))
    elapsed = time.perf_counter() - t0
    ok = all(v < 1e-4 for v in worst_rel.values()) and all(v < 1e-8 for v in worst_abs.values())
    detail = "; ".join(f"{k} {worst_rel[k]:.1e}" for k in models)
    report(5, ok and elapsed < 10.0, f"max rel err {detail}; {elapsed:.2f} s")


# -- 6 -----------------------------------------------------------------------

def test_6_optimizer_lr_linearity():
    rng = np.random.default_rng(6)
    failures = []
    for kind in optim.KINDS:
        p = rng.standard_normal(200)
        warm = optim.make_state(kind, 200)
        for _ in range(5):
            optim.step(p, rng.standard_normal(200), 0.01, warm)
        g = rng.standard_normal(200)
        deltas = []
        for lr in (0.0123, 0.0246):
            st = optim.make_state(kind, 200)
            st.step = warm.step
            for k, v in warm.buffers.items():
                st.buffers[k][...] = v
            deltas.append(optim.step(p.copy(), g, lr, st))
        if not np.array_equal(deltas[1], 2 * deltas[0]):
            failures.append(kind)
    report(6, not failures, "exact for all six" if not failures else f"not exact: {failures}")


# -- shared desk-scale runs --------------------------------------------------

@pytest.fixture(scope="module")
def dataset():
    return harness.make_dataset(None)


@pytest.fixture(scope="module")
def clr_runs():
    t0 = time.perf_counter()
    runs = [harness.clr_workflow(seed=s) for s in SEEDS]
    return runs, time.perf_counter() - t0


# -- 7 -----------------------------------------------------------------------

FIXED_GRID = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0)
FIXED_BUDGET = 2048


def test_7_clr_vs_tuned_fixed(clr_runs, dataset):
    runs, clr_time = clr_runs
    t0 = time.perf_counter()
    best = None
    for lr in FIXED_GRID:
        logs = [harness.train(harness.TrainConfig(PolicySpec("fixed", lr), max_iter=FIXED_BUDGET,
                                                  eval_every=64, seed=s), dataset) for s in SEEDS]
        med = median([l.final_accuracy for l in logs])
        if best is None or med > best[0]:
            best = (med, lr)
    elapsed = clr_time + time.perf_counter() - t0
    fixed_acc, fixed_lr = best
    clr_final = median([r.log.final_accuracy for r in runs])
    reach = [r.log.iterations_to(fixed_acc) for r in runs]
    reach_med = median([FIXED_BUDGET + 1 if x is None else x for x in reach])
    ok = reach_med <= FIXED_BUDGET and clr_final >= fixed_acc - 0.01 and elapsed < 60
    bounds = ", ".join(f"({r.bounds.base_lr:.3g}, {r.bounds.max_lr:.3g})" for r in runs)
    report(7, ok, f"tuned fixed lr={fixed_lr} acc {fixed_acc:.4f} @ {FIXED_BUDGET}; CLR acc {clr_final:.4f} "
                  f"@ {runs[0].log.final_iter}, reaches fixed acc at median iter {reach_med:.0f}; "
                  f"bounds {bounds}; {elapsed:.1f} s")


# -- 8 -----------------------------------------------------------------------

def test_8_decay_not_better_than_triangular(clr_runs, dataset):
    runs, _ = clr_runs
    tri, dec = [], []
    for s, r in zip(SEEDS, runs):
        sp = r.config.schedule
        # one linear fall from max to base over the same number of iterations as a
        # triangular half-cycle pair, then base for the rest of the equal budget
        d = PolicySpec("decay", sp.base_lr, sp.max_lr, 2 * sp.stepsize)
        log = harness.train(harness.TrainConfig(d, max_iter=r.log.final_iter, eval_every=64, seed=s), dataset)
        tri.append(r.log.final_accuracy)
        dec.append(log.final_accuracy)
    report(8, median(dec) <= median(tri), f"median final decay {median(dec):.4f} <= triangular {median(tri):.4f}; "
           f"per seed decay {dec} triangular {tri}")


# -- 9 -----------------------------------------------------------------------

def test_9_peak_timing(clr_runs):
    runs, _ = clr_runs
    fracs = [harness.peak_phase_report(r.log, r.config.schedule).fraction for r in runs]
    report(9, median(fracs) >= 0.8, f"cycle-end >= mid-cycle in median {median(fracs):.2f} of cycles {fracs}")


# -- 10 ----------------------------------------------------------------------

# sweep ranges per optimizer; adaptive methods take much smaller rates than sgd
ADAPTIVE_RANGES = {
    "nesterov": (1e-4, 1.5),
    "adagrad": (1e-4, 2.0),
    "rmsprop": (1e-5, 0.1),
    "adam": (1e-5, 0.1),
}


def test_10_clr_with_adaptive_methods(dataset):
    t0 = time.perf_counter()
    parts, ok = [], True
    for kind, (lo, hi) in ADAPTIVE_RANGES.items():
        opt = {"kind": kind}
        cfg = lr_finder.RangeTestConfig(lo, hi, 400, 2)
        clr, fixed = [], []
        for s in SEEDS:
            r = harness.clr_workflow(optimizer=opt, seed=s, range_cfg=cfg)
            clr.append(r.log)
            # the fixed counterpart runs at the lower bound the range test gave
            fx = PolicySpec("fixed", r.bounds.base_lr)
            fixed.append(harness.train(harness.TrainConfig(fx, optimizer=opt, max_iter=FIXED_BUDGET,
                                                           eval_every=64, seed=s), dataset))
        diverged = sum(l.diverged for l in clr)
        c, f = median([l.final_accuracy for l in clr]), median([l.final_accuracy for l in fixed])
        ok &= diverged == 0 and c >= f - 0.02
        parts.append(f"{kind} {c:.4f} vs {f:.4f}")
    elapsed = time.perf_counter() - t0
    report(10, ok and elapsed < 180, f"CLR vs fixed median final: {'; '.join(parts)}; {elapsed:.1f} s")


# -- 11 ----------------------------------------------------------------------

def test_11_cli_contract(tmp_path, capsys):
    problems = []

    spec = PolicySpec("triangular2", 0.001, 0.006, 250, window="welch", start=3)
    cli.main(["schedule", "--policy", "triangular2", "--base", "0.001", "--max", "0.006", "--stepsize", "250",
              "--start", "3", "--window", "welch", "--iters", "3000"])
    out = capsys.readouterr().out
    expect = "iter,lr\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(S.lr_series(spec, 3000).tolist()))
    if out != expect:
        problems.append("schedule output differs from library")

    small = {"kind": "two_moons", "n": 400, "noise_sigma": 0.2, "seed": 0, "test_fraction": 0.25}
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": small, "model": {"hidden": [16]},
                               "schedule": {"kind": "triangular", "base_lr": 0.05, "max_lr": 0.5, "stepsize": 20},
                               "run": {"batchsize": 30, "eval_every": 10}}))
    codes = {
        0: cli.main(["train", str(cfg), "--out", str(tmp_path / "a.csv"), "--seed", "3"]),
        2: cli.main(["schedule", "--policy", "triangular", "--base", "0.001", "--stepsize", "5"]),
        3: cli.main(["range-test", str(cfg), "--lr-start", "50", "--lr-end", "500", "--iters", "100"]),
        4: cli.main(["train", str(cfg), "--policy", "fixed", "--base", "1e30", "--max-iter", "40",
                     "--out", str(tmp_path / "d.csv")]),
    }
    capsys.readouterr()
    for want, got in codes.items():
        if want != got:
            problems.append(f"expected exit {want}, got {got}")

    cli.main(["train", str(cfg), "--out", str(tmp_path / "b.csv"), "--seed", "3"])
    capsys.readouterr()
    if (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes():
        problems.append("same-seed logs differ")
    report(11, not problems, "schedule byte-identical, exit codes 0/2/3/4, reruns byte-identical"
           if not problems else "; ".join(problems))

"""Command-line front end.

Subcommands:
  plan         build a sampling plan for a prediction-annotated pool
  infer        estimate and report intervals from a pool, plan, and labels
  sequential   one-pass adaptive labeling against a label file
  simulate     Monte-Carlo harness over synthetic instances
  budget-save  budget savings from a widths table

Options come from an optional key=value config file; command-line flags
override file values. Every output file starts with comment lines carrying
a hash of the effective configuration, the seed, and the configuration
itself, so results are attributable to the run that made them.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys

import numpy as np

from .batch import (
    active_batch_estimate,
    build_report,
    classical_covariance,
    classical_estimate,
    ppi_estimate,
    sandwich_covariance,
)
from .betting import betting_interval, increment_bounds
from .core import Budget, Pool, PoolSchema, RngSpec, load_pool
from .errors import ConfigError, DataError, DegenerateInputError, NumericalError
from .harness import (
    BinaryResponse,
    ExperimentConfig,
    HeteroLinear,
    QuantileTarget,
    budget_save,
    run_experiment,
)
from .losses import KINDS, ProblemSpec, solve_weighted
from .predictors import fit_error_model, make_predictor
from .sampling import SamplingPlan, build_plan, pool_uncertainty, tune_tau, uniform_plan
from .sequential import OracleError, SeqConfig, run_sequential, save_trace, sequential_covariance, sequential_estimate


def _parse_config_file(path) -> dict:
    """key = value lines; blank lines and # comments are ignored."""
    out = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
                out[key.strip()] = value.strip()
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from None
    return out


def _coerce(key: str, raw: str, kind: str):
    low = str(raw).strip().lower()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "optint":
            return None if low in ("", "none") else int(raw)
        if kind == "optfloat":
            return None if low in ("", "none") else float(raw)
        if kind == "str":
            return str(raw)
        if kind == "floats":
            return tuple(float(v) for v in str(raw).replace(",", " ").split())
        if kind == "strs":
            return tuple(str(raw).replace(",", " ").split())
        if kind == "bool":
            return low in ("1", "true", "yes", "on")
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for option {key!r}") from None
    raise ConfigError(f"unknown option kind {kind!r}")


def _effective(args, options: dict) -> dict:
    """Merge defaults, config file, and explicit flags into option strings."""
    cfg = {k: d for k, (_kind, d) in options.items() if d is not None}
    path = getattr(args, "config", None)
    if path:
        filed = _parse_config_file(path)
        unknown = sorted(set(filed) - set(options))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(filed)
    for key in options:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = str(val)
    return cfg


def _values(cfg: dict, options: dict) -> dict:
    return {k: _coerce(k, cfg[k], options[k][0]) for k in cfg}


def _config_hash(cfg: dict) -> str:
    canon = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _header_comments(cfg: dict, seed: int) -> list:
    echo = " ".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return [f"config_hash={_config_hash(cfg)} seed={seed}", f"config: {echo}"]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return int(v)
    return v


def _write_rows(path, comments, header, rows):
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_savings(path, comments, save_rows):
    """Savings table with the documented three columns; row flags go to comments."""
    notes = [f"note: baseline={r.baseline} n_b={r.n_b!r} {r.note}" for r in save_rows if r.note]
    _write_rows(path, comments + notes, ["baseline", "n_b", "save_pct"],
                [(r.baseline, r.n_b, "" if r.save_pct is None else r.save_pct) for r in save_rows])


def _problem_from(vals: dict, dim: int) -> ProblemSpec:
    kind = vals.get("problem", "mean")
    if kind not in KINDS:
        raise ConfigError(f"problem must be one of {KINDS}, got {kind!r}")
    d = dim if kind in ("linear", "logistic") else 1
    q = vals.get("q")
    if kind == "quantile" and q is None:
        q = 0.5
    return ProblemSpec(kind=kind, dim=d, j=int(vals.get("j", 0)), q=q)


def _plug_theta(pool: Pool, spec: ProblemSpec):
    """Plug-in parameter for direction weighting, from predictions only."""
    if spec.kind != "logistic" or pool.f is None:
        return None
    return solve_weighted(spec, (pool.x, np.clip(pool.f, 0.0, 1.0), np.ones(pool.n)))


def _load_labels(path, n: int) -> np.ndarray:
    pool = load_pool(path, PoolSchema(x_cols=()))
    if pool.y is None:
        raise DataError(f"{path}: no y column")
    if pool.n != n:
        raise DataError(f"{path}: {pool.n} labels for a pool of {n}")
    return pool.y


def _load_plan(path) -> SamplingPlan:
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if row[0].startswith("#"):
                text = ",".join(row)
                if text.startswith("# plan"):
                    for tok in text[len("# plan"):].split():
                        k, _, v = tok.partition("=")
                        meta[k] = v
                continue
            rows.append(row)
    if not rows or [c.strip() for c in rows[0][:3]] != ["index", "pi", "xi"]:
        raise DataError(f"{path}: expected columns index,pi,xi")
    body = rows[1:]
    pi = np.empty(len(body))
    xi = np.empty(len(body), dtype=np.int64)
    for row in body:
        i = int(row[0])
        if not (0 <= i < len(body)):
            raise DataError(f"{path}: index {i} out of range")
        pi[i] = float(row[1])
        xi[i] = int(row[2])
    eta = float(meta.get("eta", "nan"))
    tau = float(meta.get("tau", "0.0"))
    return SamplingPlan(pi=pi, xi=xi, eta=eta, tau=tau)


def _betting_row(method, f, y, pi, xi, vals, theta_point, n, n_lab, alpha, warnings):
    """Extra report row from the bounded-increment interval (mean problems)."""
    y_lo, y_hi = vals.get("y_lo"), vals.get("y_hi")
    if y_lo is None or y_hi is None:
        raise ConfigError("nonasymptotic intervals need y_lo and y_hi")
    pi = np.asarray(pi, dtype=float)
    pos = pi[pi > 0]
    if pos.size == 0:
        raise DataError("every propensity is zero; no finite-sample interval exists")
    # zero-propensity items contribute their prediction only, which the
    # label range already covers, so the floor is over positive entries
    pi_min = float(pos.min())
    lab = xi == 1
    delta = np.asarray(f, dtype=float).copy()
    delta[lab] += (np.asarray(y, dtype=float)[lab] - delta[lab]) / pi[lab]
    bounds = increment_bounds(y_lo, y_hi, pi_min)
    result = betting_interval(delta, bounds, alpha, grid_size=int(vals.get("grid_size", 1000)))
    if result.degenerate:
        warnings.append("betting interval degenerate: no value survived; least-rejected point reported")
    return (f"{method}-betting", 0, float(theta_point), result.lo, result.hi, n, n_lab, alpha)


REPORT_HEADER = ["method", "coordinate", "estimate", "lo", "hi", "n", "n_lab", "alpha"]

PLAN_OPTIONS = {
    "problem": ("str", "mean"),
    "q": ("optfloat", None),
    "j": ("int", "0"),
    "n_b": ("float", None),
    "tau": ("float", "0.5"),
    "tau_policy": ("str", "fixed"),
    "uncertainty": ("str", "auto"),
    "seed": ("int", "0"),
}


def cmd_plan(args) -> int:
    opts = _effective(args, PLAN_OPTIONS)
    vals = _values(opts, PLAN_OPTIONS)
    if "n_b" not in vals:
        raise ConfigError("plan needs a budget (n_b)")
    pool = load_pool(args.pool)
    spec = _problem_from(vals, pool.dim)
    budget = Budget(n_b=vals["n_b"], n=pool.n)
    source = None if vals["uncertainty"] == "auto" else vals["uncertainty"]
    u = pool_uncertainty(pool, spec, theta_plug=_plug_theta(pool, spec), source=source)

    tau = vals["tau"]
    if vals["tau_policy"] == "tuned":
        if not args.historical:
            raise ConfigError("tau_policy=tuned needs --historical labeled data")
        hist = load_pool(args.historical)
        if hist.y is None or hist.f is None:
            raise DataError(f"{args.historical}: tuning needs y and f columns")
        hist_spec = ProblemSpec(kind=spec.kind, dim=hist.dim if spec.kind in ("linear", "logistic") else 1, j=spec.j, q=spec.q)
        u_hist = pool_uncertainty(hist, hist_spec, theta_plug=_plug_theta(hist, hist_spec), source=source)
        tau = tune_tau(hist.f, hist.y, u_hist, Budget(n_b=budget.rate * hist.n, n=hist.n))
    elif vals["tau_policy"] != "fixed":
        raise ConfigError("tau_policy must be 'fixed' or 'tuned'")

    rng = RngSpec(vals["seed"])
    try:
        plan = build_plan(u, budget, tau, rng)
    except DegenerateInputError as e:
        print(f"warning: {e}; using the uniform rule", file=sys.stderr)
        plan = uniform_plan(budget, rng)
    comments = _header_comments(opts, vals["seed"])
    comments.append(f"inputs: pool={args.pool}" + (f" historical={args.historical}" if args.historical else ""))
    comments.append(
        f"plan eta={plan.eta!r} tau={plan.tau!r} n_b={budget.n_b!r}"
        f" expected_n_lab={float(plan.pi.sum())!r} realized_n_lab={plan.n_lab}"
    )
    _write_rows(args.out, comments, ["index", "pi", "xi"],
                [(i, float(plan.pi[i]), int(plan.xi[i])) for i in range(pool.n)])
    print(f"wrote {args.out}: {plan.n_lab} of {pool.n} items labeled (expected {plan.pi.sum():.2f})")
    return 0


INFER_OPTIONS = {
    "problem": ("str", "mean"),
    "q": ("optfloat", None),
    "j": ("int", "0"),
    "method": ("str", "active"),
    "alpha": ("float", "0.1"),
    "n_b": ("optfloat", None),
    "seed": ("int", "0"),
    "y_lo": ("optfloat", None),
    "y_hi": ("optfloat", None),
    "grid_size": ("int", "1000"),
}


def cmd_infer(args) -> int:
    opts = _effective(args, INFER_OPTIONS)
    vals = _values(opts, INFER_OPTIONS)
    pool = load_pool(args.pool)
    spec = _problem_from(vals, pool.dim)
    plan = _load_plan(args.plan)
    if len(plan.pi) != pool.n:
        raise DataError(f"plan covers {len(plan.pi)} items but the pool has {pool.n}")
    labels = _load_labels(args.labels, pool.n)
    alpha = vals["alpha"]
    method = vals["method"]
    warnings: list = []

    if method == "active":
        theta = active_batch_estimate(pool, plan, labels, spec)
        sigma = sandwich_covariance(pool, plan, labels, spec, theta)
        report = build_report("active-batch", theta, sigma, pool.n, plan.n_lab, alpha)
        pi_used = plan.pi
    elif method == "ppi":
        n_b = vals.get("n_b")
        if n_b is None:
            n_b = float(plan.pi.sum())
        budget = Budget(n_b=n_b, n=pool.n)
        theta = ppi_estimate(pool, plan.xi, labels, spec, budget)
        uni = SamplingPlan(pi=np.full(pool.n, budget.rate), xi=plan.xi, eta=budget.rate, tau=0.0)
        sigma = sandwich_covariance(pool, uni, labels, spec, theta)
        report = build_report("ppi", theta, sigma, pool.n, uni.n_lab, alpha)
        pi_used = uni.pi
    elif method == "classical":
        theta = classical_estimate(pool, plan.xi, labels, spec)
        sigma = classical_covariance(pool, plan.xi, labels, spec, theta)
        n_lab = int(plan.xi.sum())
        report = build_report("classical", theta, sigma, pool.n, n_lab, alpha, scale_n=n_lab)
        pi_used = plan.pi
    else:
        raise ConfigError(f"method must be active, ppi, or classical, got {method!r}")

    rows = list(report.rows())
    if args.nonasymptotic:
        if spec.kind != "mean":
            raise ConfigError("nonasymptotic intervals are only available for mean problems")
        if method == "classical":
            raise ConfigError("nonasymptotic intervals need the corrected increments, not the classical baseline")
        rows.append(_betting_row(report.method, pool.f, labels, pi_used, plan.xi, vals,
                                 report.theta[0], pool.n, report.n_lab, alpha, warnings))
    comments = _header_comments(opts, vals["seed"])
    comments.append(f"inputs: pool={args.pool} plan={args.plan} labels={args.labels}")
    comments += warnings
    _write_rows(args.out, comments, REPORT_HEADER, rows)
    for r in rows:
        print(f"{r[0]} coord {r[1]}: {r[2]:.6g} in [{r[3]:.6g}, {r[4]:.6g}] (alpha={alpha})")
    return 0


SEQ_OPTIONS = {
    "problem": ("str", "mean"),
    "q": ("optfloat", None),
    "j": ("int", "0"),
    "alpha": ("float", "0.1"),
    "n_b": ("float", None),
    "B": ("optint", "100"),
    "tau": ("float", "0.5"),
    "flush_period": ("float", "100.0"),
    "freeze_after": ("optint", None),
    "model": ("str", "ridge"),
    "error_model": ("str", "ridge"),
    "init": ("int", "10"),
    "seed": ("int", "0"),
    "y_lo": ("optfloat", None),
    "y_hi": ("optfloat", None),
    "grid_size": ("int", "1000"),
}


def cmd_sequential(args) -> int:
    opts = _effective(args, SEQ_OPTIONS)
    vals = _values(opts, SEQ_OPTIONS)
    if "n_b" not in vals:
        raise ConfigError("sequential needs a budget (n_b)")
    pool = load_pool(args.pool)
    spec = _problem_from(vals, pool.dim)
    labels = _load_labels(args.labels, pool.n)
    k = int(vals["init"])
    if not (0 < k < pool.n):
        raise ConfigError(f"init must lie in (0, pool size), got {k}")
    if np.any(np.isnan(labels[:k])):
        raise DataError(f"the first {k} labels seed the model and must all be present")

    model0 = make_predictor(vals["model"]).fit(pool.x[:k], labels[:k])
    error_model0 = None
    if not hasattr(model0, "proba_batch"):
        error_model0 = fit_error_model(pool.x[:k], model0.predict_batch(pool.x[:k]), labels[:k], kind=vals["error_model"])

    cfg = SeqConfig(
        budget=Budget(n_b=vals["n_b"], n=pool.n),
        problem=spec,
        B=vals.get("B"),
        tau=vals["tau"],
        flush_period=vals["flush_period"],
        freeze_after=vals.get("freeze_after"),
        error_model_kind=vals["error_model"],
    )

    def oracle(i, x):
        v = labels[i]
        if np.isnan(v):
            raise DataError(f"item {i} was queried but has no label in {args.labels}")
        return float(v)

    comments = _header_comments(opts, vals["seed"])
    comments.append(f"inputs: pool={args.pool} labels={args.labels}")
    try:
        trace = run_sequential(pool, model0, cfg, RngSpec(vals["seed"]), oracle, error_model0=error_model0)
    except OracleError as e:
        save_trace(e.partial_trace, args.out_trace, header_comments=comments)
        print(f"error: {e} (partial trace saved to {args.out_trace})", file=sys.stderr)
        return 3
    save_trace(trace, args.out_trace, header_comments=comments)

    method = "active-seq" if cfg.B is None else "active-seq-finetune"
    theta = sequential_estimate(trace, spec)
    sigma = sequential_covariance(trace, spec, theta)
    report = build_report(method, theta, sigma, trace.n_steps, trace.n_lab, vals["alpha"])
    rows = list(report.rows())
    warnings: list = []
    if args.nonasymptotic:
        if spec.kind != "mean":
            raise ConfigError("nonasymptotic intervals are only available for mean problems")
        rows.append(_betting_row(method, trace.f, trace.y, trace.pi, trace.xi, vals,
                                 report.theta[0], trace.n_steps, trace.n_lab, vals["alpha"], warnings))
    _write_rows(args.out_report, comments + warnings, REPORT_HEADER, rows)
    for r in rows:
        print(f"{r[0]} coord {r[1]}: {r[2]:.6g} in [{r[3]:.6g}, {r[4]:.6g}] (alpha={vals['alpha']})")
    print(f"labeled {trace.n_lab} of {trace.n_steps} items; trace in {args.out_trace}")
    return 0


SIM_OPTIONS = {
    "synthetic": ("str", "binary"),
    "n": ("int", "2000"),
    "problem": ("str", None),
    "q": ("optfloat", None),
    "j": ("int", "0"),
    "methods": ("strs", "active-batch,ppi,classical"),
    "n_b_grid": ("floats", None),
    "alpha": ("float", "0.1"),
    "tau": ("float", "0.5"),
    "tau_policy": ("str", "fixed"),
    "batch_trials": ("int", "1000"),
    "seq_trials": ("int", "100"),
    "B": ("optint", "100"),
    "flush_period": ("float", "100.0"),
    "seed": ("int", "0"),
    "threads": ("int", "1"),
    "seq_init": ("int", "10"),
    "example_trials": ("int", "5"),
    # synthetic-instance knobs; unset ones keep the instance defaults
    "signal": ("optfloat", None),
    "shift": ("optfloat", None),
    "miscal": ("optfloat", None),
    "noise": ("optfloat", None),
    "p_const": ("optfloat", None),
    "theta": ("floats", None),
    "noise_base": ("optfloat", None),
    "noise_scale": ("optfloat", None),
    "model_bias": ("optfloat", None),
    "slope": ("optfloat", None),
}

_SYNTH_KEYS = {
    "binary": ("n", "signal", "shift", "miscal", "noise", "p_const"),
    "hetero-linear": ("n", "theta", "noise_base", "noise_scale", "model_bias"),
    "quantile": ("n", "q", "slope", "noise"),
}

_SYNTH_DEFAULT_PROBLEM = {"binary": "mean", "hetero-linear": "linear", "quantile": "quantile"}


def _make_synthetic(vals: dict):
    kind = vals["synthetic"]
    if kind not in _SYNTH_KEYS:
        raise ConfigError(f"synthetic must be one of {sorted(_SYNTH_KEYS)}, got {kind!r}")
    kwargs = {k: vals[k] for k in _SYNTH_KEYS[kind] if vals.get(k) is not None}
    cls = {"binary": BinaryResponse, "hetero-linear": HeteroLinear, "quantile": QuantileTarget}[kind]
    return cls(**kwargs)


def cmd_simulate(args) -> int:
    opts = _effective(args, SIM_OPTIONS)
    vals = _values(opts, SIM_OPTIONS)
    synth = _make_synthetic(vals)
    if "problem" not in vals:
        vals["problem"] = _SYNTH_DEFAULT_PROBLEM[vals["synthetic"]]
        opts["problem"] = vals["problem"]
    dim = len(synth.theta) if isinstance(synth, HeteroLinear) else 1
    spec = _problem_from(vals, dim)

    cfg = ExperimentConfig(
        synthetic=synth,
        problem=spec,
        methods=tuple(vals["methods"]),
        n_b_grid=tuple(vals.get("n_b_grid", ())),
        alpha=vals["alpha"],
        tau=vals["tau"],
        tau_policy=vals["tau_policy"],
        batch_trials=vals["batch_trials"],
        seq_trials=vals["seq_trials"],
        B=vals.get("B"),
        flush_period=vals["flush_period"],
        seed=vals["seed"],
        threads=vals["threads"],
        seq_init=vals["seq_init"],
        example_trials=vals["example_trials"],
    )
    tables = run_experiment(cfg)

    os.makedirs(args.outdir, exist_ok=True)
    comments = _header_comments(opts, vals["seed"])
    target_echo = " ".join(repr(float(v)) for v in tables.theta_star)
    width_comments = comments + [f"target: {target_echo}"]
    for (method, nb), res in sorted(tables.results.items()):
        if res.failures:
            width_comments.append(f"failures: method={method} n_b={nb!r} count={len(res.failures)}")

    widths_path = os.path.join(args.outdir, "widths.csv")
    _write_rows(widths_path, width_comments, ["method", "n_b", "mean_width", "coverage"],
                [(m, nb, w, c) for m, nb, w, c in tables.widths])
    savings_path = os.path.join(args.outdir, "savings.csv")
    _write_savings(savings_path, comments, tables.savings)
    examples_path = os.path.join(args.outdir, "examples.csv")
    _write_rows(examples_path, comments, ["trial", "method", "estimate", "lo", "hi"], tables.examples)

    made = ["widths.csv", "savings.csv", "examples.csv"]
    if not args.no_figures:
        from . import figures

        figures.render_widths(tables.widths, os.path.join(args.outdir, "widths.png"), alpha=cfg.alpha)
        figures.render_savings(
            [(r.baseline, r.n_b, r.save_pct, r.note) for r in tables.savings],
            os.path.join(args.outdir, "savings.png"),
        )
        figures.render_examples(tables.examples, os.path.join(args.outdir, "examples.png"),
                                theta_star=float(tables.theta_star[spec.j]))
        made += ["widths.png", "savings.png", "examples.png"]
    print(f"wrote {', '.join(made)} to {args.outdir}")
    return 0


BUDGET_SAVE_OPTIONS = {
    "active": ("str", ""),
    "seed": ("int", "0"),
}


def cmd_budget_save(args) -> int:
    opts = _effective(args, BUDGET_SAVE_OPTIONS)
    vals = _values(opts, BUDGET_SAVE_OPTIONS)
    source_hash = ""
    curves: dict = {}
    order: list = []
    with open(args.widths, newline="") as fh:
        rows = []
        for row in csv.reader(fh):
            if not row:
                continue
            if row[0].startswith("#"):
                text = ",".join(row)
                if "config_hash=" in text and not source_hash:
                    source_hash = text.split("config_hash=", 1)[1].split()[0]
                continue
            rows.append(row)
    if not rows or [c.strip() for c in rows[0][:3]] != ["method", "n_b", "mean_width"]:
        raise DataError(f"{args.widths}: expected columns method,n_b,mean_width[,coverage]")
    for row in rows[1:]:
        method = row[0]
        if method not in curves:
            curves[method] = []
            order.append(method)
        curves[method].append((float(row[1]), float(row[2])))
    active = vals["active"] or next((m for m in order if m.startswith("active")), "")
    if not active or active not in curves:
        raise DataError(f"no active method column in {args.widths} (have: {', '.join(order)})")

    all_rows = []
    for method in order:
        if method == active:
            continue
        all_rows.extend(budget_save(curves[active], curves[method], baseline_name=method))
    comments = _header_comments(opts, vals["seed"])
    comments.append(f"inputs: widths={args.widths}")
    if source_hash:
        comments.append(f"source_hash={source_hash}")
    comments.append(f"active={active}")
    _write_savings(args.out, comments, all_rows)
    print(f"wrote {args.out} ({len(all_rows)} rows, active={active})")
    return 0


def _add_common(p, options, extras=()):
    p.add_argument("--config", help="key = value option file; flags override it")
    for key in options:
        if key in extras:
            continue
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, default=None, help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activeinfer",
                                     description="Uncertainty-guided label collection with valid confidence intervals.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="build a sampling plan from a prediction-annotated pool")
    p.add_argument("--pool", required=True, help="pool CSV (x0.., f / prob* / err)")
    p.add_argument("--out", required=True, help="plan CSV to write")
    p.add_argument("--historical", help="labeled historical pool for tau tuning")
    _add_common(p, PLAN_OPTIONS)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("infer", help="estimate and build intervals from pool + plan + labels")
    p.add_argument("--pool", required=True)
    p.add_argument("--plan", required=True, help="plan CSV from the plan subcommand")
    p.add_argument("--labels", required=True, help="CSV with a y column, one row per pool item")
    p.add_argument("--out", required=True, help="report CSV to write")
    p.add_argument("--nonasymptotic", action="store_true",
                   help="append a finite-sample interval row (mean problems; needs y-lo/y-hi)")
    _add_common(p, INFER_OPTIONS)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sequential", help="one-pass adaptive labeling against a label file")
    p.add_argument("--pool", required=True)
    p.add_argument("--labels", required=True, help="label oracle CSV (y column, row-aligned with the pool)")
    p.add_argument("--out-trace", required=True, help="decision trace CSV to write")
    p.add_argument("--out-report", required=True, help="report CSV to write")
    p.add_argument("--nonasymptotic", action="store_true",
                   help="append a finite-sample interval row (mean problems; needs y-lo/y-hi)")
    _add_common(p, SEQ_OPTIONS)
    p.set_defaults(func=cmd_sequential)

    p = sub.add_parser("simulate", help="Monte-Carlo harness on synthetic instances")
    p.add_argument("--outdir", required=True, help="directory for widths/savings/examples tables and figures")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    _add_common(p, SIM_OPTIONS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("budget-save", help="budget savings from a widths table")
    p.add_argument("--widths", required=True, help="widths.csv from simulate")
    p.add_argument("--out", required=True, help="savings CSV to write")
    _add_common(p, BUDGET_SAVE_OPTIONS)
    p.set_defaults(func=cmd_budget_save)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

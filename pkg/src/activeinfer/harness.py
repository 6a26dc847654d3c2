"""Synthetic instances and the Monte-Carlo evaluation harness.

Batch trials keep the pool fixed and redraw only the labeling decisions;
sequential trials additionally re-permute the visiting order. Coverage is
measured against the full-pool solution, the quantity the corrected
estimators actually target when the pool is held fixed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .batch import (
    active_batch_estimate,
    build_report,
    classical_covariance,
    classical_estimate,
    normal_quantile,
    ppi_estimate,
    sandwich_covariance,
)
from .core import Budget, Pool, RngSpec
from .errors import DataError, DegenerateInputError, NumericalError
from .losses import ProblemSpec, solve_weighted
from .predictors import LogisticPredictor, RidgePredictor, fit_error_model
from .sampling import build_plan, pool_uncertainty, tune_tau, uniform_plan
from .sequential import SeqConfig, run_sequential, sequential_covariance, sequential_estimate

KNOWN_METHODS = ("active-batch", "active-seq", "active-seq-finetune", "ppi", "classical")


def _sigmoid(s):
    return 1.0 / (1.0 + np.exp(-np.asarray(s, dtype=float)))


@dataclass(frozen=True)
class BinaryResponse:
    """Binary labels with a logistic response curve and a miscalibrated model.

    p_const overrides the curve with a constant response probability.
    """

    n: int = 2000
    signal: float = 1.5
    shift: float = 0.4
    miscal: float = 0.65
    noise: float = 0.9
    p_const: float | None = None


@dataclass(frozen=True)
class HeteroLinear:
    """Linear response with covariate-dependent noise and an imperfect model."""

    n: int = 2000
    theta: tuple = (2.0, -1.0)
    noise_base: float = 0.5
    noise_scale: float = 2.0
    model_bias: float = 0.6


@dataclass(frozen=True)
class QuantileTarget:
    """Gaussian response; the target is its q-quantile."""

    n: int = 2000
    q: float = 0.5
    slope: float = 0.5
    noise: float = 0.75


def _gauss_hermite_mean(fn, order: int = 80) -> float:
    # E[fn(X)] for X ~ N(0,1) by Gauss-Hermite quadrature: exact enough for truth values
    t, w = np.polynomial.hermite.hermgauss(order)
    return float(np.sum(w * fn(math.sqrt(2.0) * t)) / math.sqrt(math.pi))


def gen_synthetic(spec, rng: RngSpec) -> tuple[Pool, np.ndarray]:
    """Materialize a synthetic pool; returns it with the construction-level target.

    Labels are present in the pool but estimators must only see them
    through a sampling plan.
    """
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    if isinstance(spec, BinaryResponse):
        x = gen.standard_normal((spec.n, 1))
        if spec.p_const is not None:
            p_true = np.full(spec.n, float(spec.p_const))
            theta_star = float(spec.p_const)
        else:
            p_true = _sigmoid(spec.shift + spec.signal * x[:, 0])
            theta_star = _gauss_hermite_mean(lambda u: _sigmoid(spec.shift + spec.signal * u))
        y = (gen.random(spec.n) < p_true).astype(float)
        logits = spec.miscal * (spec.shift + spec.signal * x[:, 0]) + spec.noise * gen.standard_normal(spec.n)
        p_hat = np.clip(_sigmoid(logits), 1e-3, 1.0 - 1e-3)
        probs = np.column_stack([1.0 - p_hat, p_hat])
        f = (p_hat >= 0.5).astype(float)
        return Pool(x, y=y, f=f, probs=probs), np.array([theta_star])
    if isinstance(spec, HeteroLinear):
        theta = np.asarray(spec.theta, dtype=float)
        d = len(theta)
        x = gen.standard_normal((spec.n, d))
        scale = spec.noise_base + spec.noise_scale * np.abs(x[:, 0])
        y = x @ theta + scale * gen.standard_normal(spec.n)
        curv = x[:, min(1, d - 1)] ** 2 - 1.0
        f = x @ theta + spec.model_bias * curv
        err = np.sqrt(scale**2 + (spec.model_bias * curv) ** 2)
        return Pool(x, y=y, f=f, err=err), theta.copy()
    if isinstance(spec, QuantileTarget):
        x = gen.standard_normal((spec.n, 1))
        eps = gen.standard_normal(spec.n)
        y = spec.slope * x[:, 0] + spec.noise * eps
        f = spec.slope * x[:, 0]
        err = np.full(spec.n, spec.noise * math.sqrt(2.0 / math.pi))
        sd = math.hypot(spec.slope, spec.noise)
        return Pool(x, y=y, f=f, err=err), np.array([sd * normal_quantile(spec.q)])
    raise DataError(f"unknown synthetic kind {type(spec).__name__}")


@dataclass(frozen=True)
class ExperimentConfig:
    """One harness run: instance, problem, methods, budget grid, trial counts."""

    synthetic: object
    problem: ProblemSpec
    methods: tuple = ("active-batch", "ppi", "classical")
    n_b_grid: tuple = ()
    alpha: float = 0.1
    tau: float = 0.5
    tau_policy: str = "fixed"  # "fixed", "tuned", or "default" (0.001 batch / 0.5 sequential)
    batch_trials: int = 1000
    seq_trials: int = 100
    B: int | None = 100
    flush_period: float = 100.0
    seed: int = 0
    threads: int = 1
    seq_init: int = 10
    example_trials: int = 5

    def __post_init__(self):
        for m in self.methods:
            if m not in KNOWN_METHODS:
                raise DataError(f"unknown method {m!r} (choose from {KNOWN_METHODS})")
        if self.tau_policy not in ("fixed", "tuned", "default"):
            raise DataError("tau_policy must be 'fixed', 'tuned', or 'default'")

    def batch_tau(self) -> float:
        # "default" pins the batch experiments at the aggressive mix and
        # keeps the sequential ones at the stabilized one
        return 0.001 if self.tau_policy == "default" else self.tau

    def seq_tau(self) -> float:
        return 0.5 if self.tau_policy == "default" else self.tau

    def grid(self, n: int) -> tuple:
        if self.n_b_grid:
            return tuple(float(b) for b in self.n_b_grid)
        seq = any(m.startswith("active-seq") for m in self.methods)
        points = 10 if seq else 20
        return tuple(np.round(np.linspace(0.05, 0.5, points) * n))


@dataclass
class TrialResults:
    """Per-trial outcomes for one (method, n_b) cell."""

    method: str
    n_b: float
    estimates: np.ndarray
    lows: np.ndarray
    highs: np.ndarray
    n_labs: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def n_ok(self) -> int:
        return len(self.estimates)


def coverage_and_width(result: TrialResults, theta_star_j: float) -> tuple[float, float]:
    """Empirical coverage of the target coordinate and mean interval width."""
    if result.n_ok == 0:
        raise DataError(f"no successful trials for {result.method} at n_b={result.n_b}")
    covered = (result.lows <= theta_star_j) & (theta_star_j <= result.highs)
    return float(covered.mean()), float((result.highs - result.lows).mean())


def pool_truth(pool: Pool, spec: ProblemSpec) -> np.ndarray:
    """Full-pool solution used as the coverage target."""
    if pool.y is None or np.any(np.isnan(pool.y)):
        raise DataError("pool truth requires complete labels")
    X = pool.x if spec.kind in ("linear", "logistic") else np.zeros((pool.n, 1))
    return solve_weighted(spec, (X, pool.y, np.ones(pool.n)))


def _stream(method_idx: int, nb_idx: int, trial: int) -> int:
    return (method_idx + 1) * 10_000_000 + nb_idx * 100_000 + trial


_POOL_STREAM = 1
_HIST_STREAM = 2
_INIT_STREAM = 3


def _batch_trial(method, pool, spec, budget, u, tau, alpha, rng):
    labels_all = pool.y
    if method == "active-batch":
        try:
            plan = build_plan(u, budget, tau, rng)
        except DegenerateInputError:
            plan = uniform_plan(budget, rng)
        labels = np.where(plan.xi == 1, labels_all, np.nan)
        theta = active_batch_estimate(pool, plan, labels, spec)
        sigma = sandwich_covariance(pool, plan, labels, spec, theta)
        return build_report(method, theta, sigma, pool.n, plan.n_lab, alpha)
    if method == "ppi":
        plan = uniform_plan(budget, rng)
        labels = np.where(plan.xi == 1, labels_all, np.nan)
        theta = ppi_estimate(pool, plan.xi, labels, spec, budget)
        sigma = sandwich_covariance(pool, plan, labels, spec, theta)
        return build_report(method, theta, sigma, pool.n, plan.n_lab, alpha)
    if method == "classical":
        plan = uniform_plan(budget, rng)
        labels = np.where(plan.xi == 1, labels_all, np.nan)
        theta = classical_estimate(pool, plan.xi, labels, spec)
        sigma = classical_covariance(pool, plan.xi, labels, spec, theta)
        return build_report(method, theta, sigma, pool.n, plan.n_lab, alpha, scale_n=plan.n_lab)
    raise DataError(f"not a batch method: {method}")


def _init_model(cfg: ExperimentConfig, spec: ProblemSpec):
    """Starting model for sequential runs, trained on a small fresh sample."""
    init_spec = replace(cfg.synthetic, n=max(cfg.seq_init, 4))
    init_pool, _ = gen_synthetic(init_spec, RngSpec(cfg.seed, _INIT_STREAM))
    binary = isinstance(cfg.synthetic, BinaryResponse)
    if binary:
        model = LogisticPredictor(lam=1.0).fit(init_pool.x, init_pool.y)
        return model, None
    model = RidgePredictor().fit(init_pool.x, init_pool.y)
    preds = model.predict_batch(init_pool.x)
    error_model = fit_error_model(init_pool.x, preds, init_pool.y)
    return model, error_model


def _seq_trial(method, pool, spec, budget, cfg, model0, error_model0, rng):
    gen = rng.generator()
    perm = gen.permutation(pool.n)
    permuted = pool.subset(perm)
    seq_cfg = SeqConfig(
        budget=budget,
        problem=spec,
        B=cfg.B if method == "active-seq-finetune" else None,
        tau=cfg.seq_tau(),
        flush_period=cfg.flush_period,
    )
    hidden = permuted.y

    def oracle(i, x):
        return hidden[i]

    trace = run_sequential(permuted, model0, seq_cfg, gen, oracle, error_model0=error_model0)
    theta = sequential_estimate(trace, spec)
    sigma = sequential_covariance(trace, spec, theta)
    return build_report(method, theta, sigma, pool.n, trace.n_lab, cfg.alpha)


def run_trials(cfg: ExperimentConfig, pool: Pool | None = None) -> dict:
    """Monte-Carlo over methods and the budget grid.

    Returns {(method, n_b): TrialResults}. Per-trial failures are recorded
    in the cell, not raised.
    """
    if pool is None:
        pool, _ = gen_synthetic(cfg.synthetic, RngSpec(cfg.seed, _POOL_STREAM))
    spec = cfg.problem
    grid = cfg.grid(pool.n)
    results = {}
    seq_state = None
    for mi, method in enumerate(cfg.methods):
        is_seq = method.startswith("active-seq")
        trials = cfg.seq_trials if is_seq else cfg.batch_trials
        if is_seq and seq_state is None:
            seq_state = _init_model(cfg, spec)
        for bi, n_b in enumerate(grid):
            budget = Budget(n_b=n_b, n=pool.n)
            u = tau = None
            if method == "active-batch":
                u = pool_uncertainty(pool, spec, theta_plug=_plug(pool, spec))
                tau = _tuned_tau(cfg, spec, budget) if cfg.tau_policy == "tuned" else cfg.batch_tau()

            def one(trial):
                rng = RngSpec(cfg.seed, _stream(mi, bi, trial))
                try:
                    if is_seq:
                        rep = _seq_trial(method, pool, spec, budget, cfg, *seq_state, rng)
                    else:
                        rep = _batch_trial(method, pool, spec, budget, u, tau, cfg.alpha, rng)
                except (DataError, NumericalError, ValueError) as exc:
                    return ("fail", f"trial {trial}: {exc}")
                j = spec.j
                lo, hi = rep.intervals[j]
                return ("ok", (float(rep.theta[j]), lo, hi, rep.n_lab))

            if cfg.threads > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
                    outcomes = list(ex.map(one, range(trials)))
            else:
                outcomes = [one(t) for t in range(trials)]
            oks = [v for k, v in outcomes if k == "ok"]
            fails = [v for k, v in outcomes if k == "fail"]
            arr = np.array(oks, dtype=float).reshape(-1, 4)
            results[(method, float(n_b))] = TrialResults(
                method=method,
                n_b=float(n_b),
                estimates=arr[:, 0],
                lows=arr[:, 1],
                highs=arr[:, 2],
                n_labs=arr[:, 3],
                failures=fails,
            )
    return results


def _plug(pool: Pool, spec: ProblemSpec):
    """Plug-in parameter for the direction weighting, from predictions only."""
    if spec.kind != "logistic":
        return None
    return solve_weighted(spec, (pool.x, np.clip(pool.f, 0.0, 1.0), np.ones(pool.n)))


def _tuned_tau(cfg: ExperimentConfig, spec: ProblemSpec, budget: Budget) -> float:
    hist_spec = replace(cfg.synthetic, n=max(200, cfg.seq_init))
    hist, _ = gen_synthetic(hist_spec, RngSpec(cfg.seed, _HIST_STREAM))
    hist_budget = Budget(n_b=budget.rate * hist.n, n=hist.n)
    u = pool_uncertainty(hist, spec, theta_plug=_plug(hist, spec))
    return tune_tau(hist.f, hist.y, u, hist_budget)


@dataclass
class SaveRow:
    baseline: str
    n_b: float
    save_pct: float | None
    note: str = ""


def budget_save(active_curve, baseline_curve, baseline_name: str = "baseline") -> list:
    """Budget savings of the active curve against a baseline, by interpolation.

    Curves are sequences of (n_b, mean_width). For each baseline point the
    active budget reaching the same width is found by linear interpolation
    (first crossing if the active curve is non-monotone, with a note);
    widths outside the active range yield a missing value.
    """
    act = sorted((float(b), float(w)) for b, w in active_curve)
    if len(act) < 1:
        raise DataError("empty active curve")
    rows = []
    for b, w in ((float(b), float(w)) for b, w in baseline_curve):
        crossings = []
        for (b0, w0), (b1, w1) in zip(act, act[1:]):
            if (w0 - w) * (w1 - w) <= 0:
                t = 0.5 if w0 == w1 else (w0 - w) / (w0 - w1)
                crossings.append(b0 + t * (b1 - b0))
        if len(act) == 1 and act[0][1] == w:
            crossings.append(act[0][0])
        # adjacent segments touch at shared endpoints; those are one crossing
        distinct = []
        for c in crossings:
            if not distinct or abs(c - distinct[-1]) > 1e-9 * max(1.0, abs(c)):
                distinct.append(c)
        if not distinct:
            rows.append(SaveRow(baseline_name, b, None, "width outside the active range"))
            continue
        note = "non-monotone active curve; first crossing used" if len(distinct) > 1 else ""
        b_star = distinct[0]
        rows.append(SaveRow(baseline_name, b, (b - b_star) / b * 100.0, note))
    return rows


@dataclass
class ExperimentTables:
    """Aggregated harness output ready for serialization."""

    widths: list  # (method, n_b, mean_width, coverage)
    savings: list  # SaveRow
    examples: list  # (trial, method, estimate, lo, hi)
    theta_star: np.ndarray
    results: dict


def run_experiment(cfg: ExperimentConfig) -> ExperimentTables:
    """Full harness pass: trials, width/coverage table, savings, example intervals."""
    pool, _ = gen_synthetic(cfg.synthetic, RngSpec(cfg.seed, _POOL_STREAM))
    theta_star = pool_truth(pool, cfg.problem)
    results = run_trials(cfg, pool=pool)
    grid = sorted({nb for _, nb in results})
    target = theta_star[cfg.problem.j]

    widths = []
    curves = {}
    for method in cfg.methods:
        pts = []
        for nb in grid:
            res = results[(method, nb)]
            cov, width = coverage_and_width(res, target)
            widths.append((method, nb, width, cov))
            pts.append((nb, width))
        curves[method] = pts

    primary = next((m for m in cfg.methods if m.startswith("active")), None)
    savings = []
    if primary is not None:
        for method in cfg.methods:
            if method == primary:
                continue
            savings.extend(budget_save(curves[primary], curves[method], baseline_name=method))

    example_nb = sorted(grid, reverse=True)[min(3, len(grid) - 1)]
    examples = []
    for trial in range(cfg.example_trials):
        for method in cfg.methods:
            res = results[(method, example_nb)]
            if trial < res.n_ok:
                examples.append(
                    (trial, method, float(res.estimates[trial]), float(res.lows[trial]), float(res.highs[trial]))
                )
    return ExperimentTables(widths=widths, savings=savings, examples=examples, theta_star=theta_star, results=results)

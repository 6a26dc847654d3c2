"""One-pass label collection with online fine-tuning.

The engine visits pool items in order, decides per item whether to pay for
its label, and periodically refits the prediction model on everything
collected so far. Decisions at step t depend only on data from steps
before t, which is what makes the per-step increments a martingale and
the downstream intervals valid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Budget, Pool, RngSpec
from .errors import DataError, InvalidPlanError, SingularDesignError
from .losses import ProblemSpec, density_hessian, grad_matrix, hessian_average, solve_weighted
from .predictors import ErrorModel, crossfit_predictions, make_predictor
from .sampling import GlmDirection, SequentialBudgetState, glm_direction, glm_uncertainty

MIN_ERROR_FIT = 8  # labeled points needed before the error model is trusted


@dataclass(frozen=True)
class SeqConfig:
    """Settings for one sequential run.

    B             labels between refits (None: never refit)
    tau           uniform mixing weight
    flush_period  flush the budget every ceil(flush_period * n / n_b) steps
    freeze_after  stop refitting after this step (None: never freeze)
    """

    budget: Budget
    problem: ProblemSpec = ProblemSpec("mean")
    B: int | None = 100
    tau: float = 0.5
    flush_period: float = 100.0
    freeze_after: int | None = None
    error_model_kind: str = "ridge"

    def __post_init__(self):
        if not (0 <= self.tau <= 1):
            raise DataError(f"tau must lie in [0, 1], got {self.tau}")
        if self.B is not None and self.B < 1:
            raise DataError("B must be positive")
        if self.flush_period <= 0:
            raise DataError("flush_period must be positive")


@dataclass(frozen=True)
class Trace:
    """Everything needed to audit or replay a sequential run."""

    x: np.ndarray
    pi: np.ndarray
    xi: np.ndarray
    y: np.ndarray
    f: np.ndarray
    version: np.ndarray
    flush: np.ndarray
    budget: Budget
    tau: float
    B: int | None
    flush_period: float
    complete: bool = True

    @property
    def n_steps(self) -> int:
        return len(self.pi)

    @property
    def n_lab(self) -> int:
        return int(self.xi.sum())


class OracleError(DataError):
    """The label oracle failed mid-run; carries the partial trace."""

    def __init__(self, message, partial_trace: Trace):
        super().__init__(message)
        self.partial_trace = partial_trace


def _model_uncertainty(model, error_model, direction, X, spec):
    """Pool-wide uncertainty under the current model state."""
    if hasattr(model, "proba_batch"):
        probs = model.proba_batch(X)
        k = probs.shape[1]
        return k / (k - 1.0) * (1.0 - probs.max(axis=1))
    if error_model is None:
        return np.ones(X.shape[0])
    err = error_model.predict_batch(X)
    if spec.kind in ("linear", "logistic") and direction is not None:
        return glm_uncertainty(err, X, direction)
    return err


def _refresh_direction(spec, lx, ly):
    """GLM direction from labeled data so far; None when it cannot be formed yet."""
    if spec.kind not in ("linear", "logistic"):
        return None
    X = np.asarray(lx)
    if len(ly) <= spec.dim:
        return None
    try:
        theta_plug = solve_weighted(spec, (X, np.asarray(ly), np.ones(len(ly))))
        return glm_direction(X, spec, theta_plug)
    except Exception:
        return None


def _crossfit_like(model, X, y):
    """Out-of-fold predictions using the same learner class and settings."""
    if isinstance(model, ErrorModel):
        model = model.model
    kind = {"RidgePredictor": "ridge", "LogisticPredictor": "logistic", "KNearestPredictor": "knn"}[
        type(model).__name__
    ]
    hyper = {}
    if hasattr(model, "lam"):
        hyper["lam"] = model.lam
    if hasattr(model, "k"):
        hyper["k"] = model.k
    return crossfit_predictions(kind, X, y, **hyper)


def run_sequential(pool: Pool, model0, cfg: SeqConfig, rng, oracle, error_model0: ErrorModel | None = None) -> Trace:
    """Visit the pool once, collecting labels adaptively under the budget.

    oracle(i, x) must return the label of pool item i; any exception it
    raises aborts the run with the partial trace attached.
    """
    n = pool.n
    if cfg.budget.n != n:
        raise DataError("budget pool size does not match the pool")
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    rate = cfg.budget.rate
    period = math.ceil(cfg.flush_period * n / cfg.budget.n_b)
    spec = cfg.problem

    model = model0
    error_model = error_model0
    direction = None  # refreshed from labeled data at refits

    u_vec = _model_uncertainty(model, error_model, direction, pool.x, spec)
    f_vec = model.predict_batch(pool.x)
    eta_t = rate / u_vec.mean() if u_vec.mean() > 0 else 0.0

    state = SequentialBudgetState(budget=cfg.budget)
    flush_mode = False
    pending_x, pending_y = [], []
    labeled_x, labeled_y = [], []

    pi_a = np.zeros(n)
    xi_a = np.zeros(n, dtype=np.int64)
    y_a = np.full(n, np.nan)
    f_a = np.zeros(n)
    ver_a = np.zeros(n, dtype=np.int64)
    flush_a = np.zeros(n, dtype=bool)

    def partial(upto):
        return Trace(
            x=pool.x[:upto].copy(), pi=pi_a[:upto], xi=xi_a[:upto], y=y_a[:upto], f=f_a[:upto],
            version=ver_a[:upto], flush=flush_a[:upto],
            budget=cfg.budget, tau=cfg.tau, B=cfg.B, flush_period=cfg.flush_period, complete=False,
        )

    for i in range(n):
        state.advance()
        t = state.t
        nd = state.n_delta
        if not flush_mode and (t % period == 0 or nd >= n - t + 1):
            flush_mode = True
        if flush_mode and nd <= 0:
            flush_mode = False

        if flush_mode:
            pi_t = min(nd, 1.0)
            if cfg.tau > 0:
                # keep the global propensity floor so bounded-increment
                # intervals stay valid on flush steps
                pi_t = min(max(pi_t, cfg.tau * rate), 1.0)
            flush_a[i] = True
        else:
            raw = min(eta_t * u_vec[i], nd)
            raw = min(max(raw, 0.0), 1.0)
            pi_t = (1.0 - cfg.tau) * raw + cfg.tau * rate

        pi_a[i] = pi_t
        f_a[i] = f_vec[i]
        ver_a[i] = model.version

        xi_t = 1 if gen.random() < pi_t else 0
        xi_a[i] = xi_t
        state.record(bool(xi_t))
        if not xi_t:
            continue

        try:
            y_t = float(oracle(i, pool.x[i]))
        except Exception as exc:  # oracle failure aborts with the partial trace
            raise OracleError(f"label oracle failed at step {t}: {exc}", partial(i + 1)) from exc
        y_a[i] = y_t
        pending_x.append(pool.x[i])
        pending_y.append(y_t)
        labeled_x.append(pool.x[i])
        labeled_y.append(y_t)

        refit_due = cfg.B is not None and len(pending_x) >= cfg.B
        frozen = cfg.freeze_after is not None and t >= cfg.freeze_after
        if refit_due and not frozen:
            model = model.finetune(np.array(pending_x), np.array(pending_y))
            pending_x, pending_y = [], []
            lx, ly = np.array(labeled_x), np.array(labeled_y)
            if error_model is not None and len(ly) >= MIN_ERROR_FIT:
                oof = _crossfit_like(model, lx, ly)
                targets = np.abs(oof - ly)
                error_model = ErrorModel(
                    make_predictor(cfg.error_model_kind).fit(lx, targets)
                )
            direction = _refresh_direction(spec, lx, ly)
            u_vec = _model_uncertainty(model, error_model, direction, pool.x, spec)
            f_vec = model.predict_batch(pool.x)
            mean_u = u_vec.mean()
            eta_t = rate / mean_u if mean_u > 0 else 0.0

    return Trace(
        x=pool.x.copy(), pi=pi_a, xi=xi_a, y=y_a, f=f_a, version=ver_a, flush=flush_a,
        budget=cfg.budget, tau=cfg.tau, B=cfg.B, flush_period=cfg.flush_period,
    )


def _check_trace(trace: Trace):
    lab = trace.xi == 1
    if np.any(trace.pi[lab] <= 0):
        raise InvalidPlanError("a label was collected at zero propensity")
    if np.any(np.isnan(trace.y[lab])):
        raise DataError("a collected label is missing from the trace")
    return lab


def sequential_estimate(trace: Trace, spec: ProblemSpec) -> np.ndarray:
    """Estimate from a trace, using each step's own prediction in the correction."""
    lab = _check_trace(trace)
    if spec.kind == "mean":
        delta = trace.f.astype(float).copy()
        delta[lab] += (trace.y[lab] - trace.f[lab]) / trace.pi[lab]
        return np.array([float(np.mean(delta))])
    X = trace.x
    X_stack = np.vstack([X, X[lab]]) if spec.kind in ("linear", "logistic") else np.zeros((trace.n_steps + int(lab.sum()), 1))
    y_stack = np.concatenate([trace.f, trace.y[lab]])
    w_f = np.ones(trace.n_steps)
    w_f[lab] = 1.0 - 1.0 / trace.pi[lab]
    w_stack = np.concatenate([w_f, 1.0 / trace.pi[lab]])
    return solve_weighted(spec, (X_stack, y_stack, w_stack))


def sequential_increments(trace: Trace, spec: ProblemSpec, theta) -> np.ndarray:
    """Per-step gradient increments at theta (rows)."""
    lab = _check_trace(trace)
    X = trace.x if spec.kind in ("linear", "logistic") else None
    g = grad_matrix(spec, theta, X, trace.f).astype(float)
    if np.any(lab):
        gy = grad_matrix(spec, theta, None if X is None else X[lab], trace.y[lab])
        g[lab] += (gy - g[lab]) / trace.pi[lab][:, None]
    return g


def sequential_covariance(trace: Trace, spec: ProblemSpec, theta) -> np.ndarray:
    """Sandwich covariance from per-step increments (scale: one increment)."""
    g = sequential_increments(trace, spec, theta)
    centered = g - g.mean(axis=0)
    V = centered.T @ centered / g.shape[0]
    if spec.kind == "quantile":
        lab = trace.xi == 1
        H = density_hessian(trace.y[lab], 1.0 / trace.pi[lab], float(np.asarray(theta).reshape(-1)[0]))
    elif spec.kind == "mean":
        H = np.array([[1.0]])
    else:
        H = hessian_average(spec, theta, trace.x)
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        raise SingularDesignError("empirical Hessian is singular") from None
    sigma = Hinv @ V @ Hinv.T
    return 0.5 * (sigma + sigma.T)


def save_trace(trace: Trace, path, header_comments=()) -> None:
    """Serialize a trace to CSV (full float precision, replayable)."""
    with open(path, "w", newline="") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write(
            f"# trace n={trace.n_steps} n_b={trace.budget.n_b!r} pool_n={trace.budget.n}"
            f" tau={trace.tau!r} B={'none' if trace.B is None else trace.B}"
            f" flush_period={trace.flush_period!r} complete={int(trace.complete)}\n"
        )
        writer = csv.writer(fh)
        d = trace.x.shape[1]
        writer.writerow(["t", "pi", "xi", "y", "f", "version", "flush"] + [f"x{k}" for k in range(d)])
        for i in range(trace.n_steps):
            row = [
                i + 1,
                repr(float(trace.pi[i])),
                int(trace.xi[i]),
                "" if np.isnan(trace.y[i]) else repr(float(trace.y[i])),
                repr(float(trace.f[i])),
                int(trace.version[i]),
                int(trace.flush[i]),
            ] + [repr(float(v)) for v in trace.x[i]]
            writer.writerow(row)


def load_trace(path) -> Trace:
    """Read back a trace written by save_trace."""
    with open(path, newline="") as fh:
        first = fh.readline()
        while first.startswith("#") and not first.startswith("# trace"):
            first = fh.readline()
        if not first.startswith("# trace"):
            raise DataError(f"{path}: not a trace file")
        meta = {}
        for tok in first[len("# trace") :].split():
            k, _, v = tok.partition("=")
            meta[k] = v
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    d = sum(1 for c in header if c.startswith("x") and c[1:].isdigit())
    n = len(rows)
    x = np.empty((n, d))
    pi = np.empty(n)
    xi = np.empty(n, dtype=np.int64)
    y = np.full(n, np.nan)
    f = np.empty(n)
    version = np.empty(n, dtype=np.int64)
    flush = np.empty(n, dtype=bool)
    for i, row in enumerate(rows):
        pi[i] = float(row[1])
        xi[i] = int(row[2])
        if row[3] != "":
            y[i] = float(row[3])
        f[i] = float(row[4])
        version[i] = int(row[5])
        flush[i] = bool(int(row[6]))
        x[i] = [float(v) for v in row[7 : 7 + d]]
    return Trace(
        x=x, pi=pi, xi=xi, y=y, f=f, version=version, flush=flush,
        budget=Budget(n_b=float(meta["n_b"]), n=int(meta["pool_n"])),
        tau=float(meta["tau"]),
        B=None if meta["B"] == "none" else int(meta["B"]),
        flush_period=float(meta["flush_period"]),
        complete=bool(int(meta["complete"])),
    )

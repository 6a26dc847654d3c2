"""Sampling-rule construction.

Label-collection probabilities are proportional to model uncertainty,
calibrated so the expected number of labels meets the budget, optionally
mixed with a uniform component for stability, and (in the sequential
setting) capped by the running budget tracker.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Budget, Pool, RngSpec
from .errors import DataError, DegenerateInputError, InvalidPlanError, SingularDesignError
from .losses import ProblemSpec, hessian_average
from .predictors import classification_uncertainty

DEFAULT_TAU_GRID = tuple(np.round(np.linspace(0.1, 1.0, 10), 10))


@dataclass(frozen=True)
class SamplingPlan:
    """Per-item labeling probabilities and realized decisions for one batch run."""

    pi: np.ndarray
    xi: np.ndarray
    eta: float
    tau: float
    budget: Budget | None = None
    n_lab: int = field(init=False)

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        xi = np.asarray(self.xi)
        if pi.shape != xi.shape:
            raise InvalidPlanError("pi and xi differ in length")
        if np.any(pi < 0) or np.any(pi > 1):
            raise InvalidPlanError("probabilities must lie in [0, 1]")
        if not np.all(np.isin(xi, (0, 1))):
            raise InvalidPlanError("decisions must be 0/1")
        if self.budget is not None:
            if len(pi) != self.budget.n:
                raise InvalidPlanError("plan length does not match budget pool size")
            if pi.sum() > self.budget.n_b + 1e-9:
                raise InvalidPlanError(
                    f"expected labels {pi.sum():.6f} exceed the budget {self.budget.n_b}"
                )
            if self.tau > 0:
                floor = self.tau * self.budget.rate
                if np.any(pi < floor - 1e-12):
                    raise InvalidPlanError("mixed probabilities fall below the uniform floor")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "xi", xi.astype(np.int64))
        object.__setattr__(self, "n_lab", int(xi.sum()))


@dataclass(frozen=True)
class GlmDirection:
    """Column j of the inverse empirical Hessian, used to weight per-item errors."""

    h: np.ndarray
    j: int


@dataclass
class SequentialBudgetState:
    """Running budget tracker for the one-pass setting.

    At step t (1-based) the imaginary budget is t * n_b / n and the slack
    n_delta is what the rule may still spend at this step.
    """

    budget: Budget
    t: int = 0
    n_lab: int = 0

    @property
    def n_delta(self) -> float:
        return self.t * self.budget.rate - self.n_lab

    def advance(self) -> None:
        self.t += 1

    def record(self, labeled: bool) -> None:
        if labeled:
            self.n_lab += 1


def calibrate_eta(u, budget: Budget) -> tuple[float, np.ndarray]:
    """Scale uncertainties into probabilities that spend the budget in expectation.

    eta = n_b / sum(u); probabilities are min(eta * u, 1), so the expected
    label count never exceeds n_b.
    """
    u = np.asarray(u, dtype=float)
    if len(u) != budget.n:
        raise DataError(f"{len(u)} uncertainties for a pool of {budget.n}")
    if np.any(~np.isfinite(u)) or np.any(u < 0):
        raise DataError("uncertainties must be finite and nonnegative")
    total = u.sum()
    if total <= 0:
        raise DegenerateInputError("all uncertainties are zero; fall back to uniform sampling")
    eta = float(budget.n_b / total)
    return eta, np.minimum(eta * u, 1.0)


def tau_mix(pi, tau: float, budget: Budget) -> np.ndarray:
    """Mix probabilities with the uniform rule: (1-tau)*pi + tau*n_b/n."""
    if not (0 <= tau <= 1):
        raise DataError(f"tau must lie in [0, 1], got {tau}")
    pi = np.asarray(pi, dtype=float)
    return (1.0 - tau) * pi + tau * budget.rate


def tune_tau(f, y, u, budget: Budget, grid=DEFAULT_TAU_GRID) -> float:
    """Pick the mixing weight minimizing the inverse-propensity residual sum.

    Evaluates sum((y - f)^2 / pi_tau(x)) on historical labeled data over a
    tau grid; ties break toward the largest tau.
    """
    f = np.asarray(f, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if not (f.shape == y.shape == u.shape):
        raise DataError("historical arrays differ in length")
    if len(f) == 0:
        raise DataError("no historical data to tune on")
    if np.any(u < 0):
        raise DataError("uncertainties must be nonnegative")
    grid = sorted(float(t) for t in grid)
    if not grid or grid[0] < 0 or grid[-1] > 1:
        raise DataError("tau grid must lie in [0, 1]")
    mean_u = u.mean()
    pi_raw = np.minimum(budget.rate / mean_u * u, 1.0) if mean_u > 0 else np.zeros_like(u)
    r2 = (y - f) ** 2
    best_tau, best_obj = None, np.inf
    for tau in grid:
        pi = (1.0 - tau) * pi_raw + tau * budget.rate
        obj = np.inf if np.any(pi <= 0) else float(np.sum(r2 / pi))
        if obj <= best_obj:
            best_tau, best_obj = tau, obj
    if not np.isfinite(best_obj):
        raise DegenerateInputError("every tau on the grid leaves a zero-probability point")
    return best_tau


def glm_direction(X, spec: ProblemSpec, theta_plug=None) -> GlmDirection:
    """Direction h = H^{-1} e_j from the plug-in empirical Hessian."""
    if spec.kind == "quantile":
        raise ValueError("no pointwise Hessian for quantile problems; weight by err directly")
    if spec.kind == "mean":
        return GlmDirection(h=np.array([1.0]), j=0)
    if theta_plug is None:
        if spec.kind == "logistic":
            raise DataError("logistic direction needs a plug-in parameter")
        theta_plug = np.zeros(spec.dim)
    H = hessian_average(spec, theta_plug, X)
    e = np.zeros(spec.dim)
    e[spec.j] = 1.0
    try:
        h = np.linalg.solve(H, e)
    except np.linalg.LinAlgError:
        raise SingularDesignError("empirical Hessian is singular") from None
    return GlmDirection(h=h, j=spec.j)


def glm_uncertainty(err, X, direction: GlmDirection) -> np.ndarray:
    """Per-item uncertainty err(x) * |x' h_j| for GLM coordinates."""
    err = np.asarray(err, dtype=float).reshape(-1)
    if np.any(err < 0):
        raise DataError("err must be nonnegative")
    if X is None:
        return err * abs(float(direction.h[0]))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != len(err):
        raise DataError("err and covariates differ in length")
    return err * np.abs(X @ direction.h)


def pool_uncertainty(pool: Pool, spec: ProblemSpec, theta_plug=None, source: str | None = None) -> np.ndarray:
    """Uncertainty column for a pool: classification-based or error-model-based."""
    if source is None:
        source = "probs" if (pool.probs is not None and spec.kind in ("mean", "logistic")) else "err"
    if source == "probs":
        if pool.probs is None or np.any(np.isnan(pool.probs)):
            raise DataError("pool lacks complete class probabilities")
        return classification_uncertainty(pool.probs)
    if source != "err":
        raise DataError(f"unknown uncertainty source {source!r}")
    if pool.err is None or np.any(np.isnan(pool.err)):
        raise DataError("pool lacks a complete err column")
    if spec.kind in ("mean", "quantile"):
        return pool.err.copy()
    direction = glm_direction(pool.x, spec, theta_plug)
    return glm_uncertainty(pool.err, pool.x, direction)


def sequential_pi(eta_t: float, u_t, n_delta_t: float):
    """One-pass rule: clamp(min(eta_t * u_t, n_delta_t), 0, 1)."""
    return np.clip(np.minimum(eta_t * np.asarray(u_t, dtype=float), n_delta_t), 0.0, 1.0)


def draw_decisions(pi, rng) -> np.ndarray:
    """Independent Bernoulli(pi) draws; rng is an RngSpec or a numpy Generator."""
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    pi = np.asarray(pi, dtype=float)
    return (gen.random(pi.shape) < pi).astype(np.int64)


def build_plan(u, budget: Budget, tau: float, rng) -> SamplingPlan:
    """Calibrate, mix, and draw: the full batch sampling rule."""
    eta, pi = calibrate_eta(u, budget)
    pi = tau_mix(pi, tau, budget)
    xi = draw_decisions(pi, rng)
    return SamplingPlan(pi=pi, xi=xi, eta=eta, tau=tau, budget=budget)


def uniform_plan(budget: Budget, rng) -> SamplingPlan:
    """Uniform rule pi = n_b/n, used by the uniform baseline and as a fallback."""
    pi = np.full(budget.n, budget.rate)
    xi = draw_decisions(pi, rng)
    return SamplingPlan(pi=pi, xi=xi, eta=budget.rate, tau=0.0, budget=budget)

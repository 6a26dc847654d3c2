"""Batch estimation and asymptotic inference.

The corrected objective uses model predictions on every item and adds an
inverse-propensity-weighted correction on the items whose true label was
collected. Standard errors come from the sandwich formula with plug-in
gradient increments; intervals are Wald intervals on the reported
coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Budget, Pool
from .errors import (
    DataError,
    InsufficientDataError,
    InvalidPlanError,
    SingularDesignError,
)
from .losses import (
    ProblemSpec,
    density_hessian,
    grad_matrix,
    hessian_average,
    solve_weighted,
)
from .sampling import SamplingPlan

# Rational approximation of the standard normal quantile (Acklam's
# coefficients), refined by one Halley step to well below 1e-9.
_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, accurate to better than 1e-9."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p}")
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # one Halley step against the exact CDF
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def wald_interval(theta_j: float, var_jj: float, n: int, alpha: float) -> tuple[float, float]:
    """theta_j +/- z_{1-alpha/2} * sqrt(var_jj / n)."""
    if var_jj < 0:
        raise ValueError("variance must be nonnegative")
    if n < 1:
        raise ValueError("n must be positive")
    if not (0 < alpha < 1):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(var_jj / n)
    return theta_j - half, theta_j + half


def empirical_increment_variance(increments) -> float:
    """Variance of scalar increments with divisor n (not n-1)."""
    z = np.asarray(increments, dtype=float).reshape(-1)
    if z.size < 2:
        raise InsufficientDataError(f"need at least 2 increments, got {z.size}")
    return float(np.var(z))


def _check_plan_and_labels(pool: Pool, plan: SamplingPlan, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=float).reshape(-1)
    if len(plan.pi) != pool.n or len(labels) != pool.n:
        raise DataError("pool, plan, and labels must agree in length")
    lab = plan.xi == 1
    if np.any(plan.pi[lab] <= 0):
        bad = int(np.flatnonzero(lab & (plan.pi <= 0))[0])
        raise InvalidPlanError(f"item {bad} was labeled at zero propensity")
    if np.any(np.isnan(labels[lab])):
        bad = int(np.flatnonzero(lab & np.isnan(labels))[0])
        raise DataError(f"item {bad} was labeled but its label is missing")
    return labels


def _predictions(pool: Pool) -> np.ndarray:
    if pool.f is None or np.any(np.isnan(pool.f)):
        raise DataError("pool lacks a complete prediction column f")
    return pool.f


def _corrected_solve(spec, X, f, y, pi, xi):
    lab = xi == 1
    w_f = np.ones(len(f))
    w_f[lab] = 1.0 - 1.0 / pi[lab]
    X_stack = None
    if spec.kind in ("linear", "logistic"):
        X_stack = np.vstack([X, X[lab]])
    y_stack = np.concatenate([f, y[lab]])
    w_stack = np.concatenate([w_f, 1.0 / pi[lab]])
    return solve_weighted(spec, (X_stack if X_stack is not None else np.zeros((len(y_stack), 1)), y_stack, w_stack))


def active_batch_estimate(pool: Pool, plan: SamplingPlan, labels, spec: ProblemSpec) -> np.ndarray:
    """Minimize the prediction-corrected objective for the given plan.

    labels is a length-n array; entries are read only where the plan
    collected a label (NaN elsewhere is fine).
    """
    labels = _check_plan_and_labels(pool, plan, labels)
    f = _predictions(pool)
    if spec.kind == "mean":
        delta = f.astype(float).copy()
        lab = plan.xi == 1
        delta[lab] += (labels[lab] - f[lab]) / plan.pi[lab]
        return np.array([float(np.mean(delta))])
    return _corrected_solve(spec, pool.x, f, labels, plan.pi, plan.xi)


def ppi_estimate(pool: Pool, xi, labels, spec: ProblemSpec, budget: Budget) -> np.ndarray:
    """Uniform-rule baseline: every item is labeled with probability n_b/n."""
    xi = np.asarray(xi).astype(np.int64)
    rate = budget.rate
    pi = np.full(pool.n, rate)
    plan_labels = _check_plan_and_labels(pool, SamplingPlan(pi=pi, xi=xi, eta=rate, tau=0.0), labels)
    f = _predictions(pool)
    if spec.kind == "mean":
        delta = f.astype(float).copy()
        lab = xi == 1
        delta[lab] += (plan_labels[lab] - f[lab]) / pi[lab]
        return np.array([float(np.mean(delta))])
    return _corrected_solve(spec, pool.x, f, plan_labels, pi, xi)


def classical_estimate(pool: Pool, xi, labels, spec: ProblemSpec) -> np.ndarray:
    """Plain M-estimate on the labeled subset only; ignores predictions."""
    xi = np.asarray(xi).astype(np.int64)
    labels = np.asarray(labels, dtype=float).reshape(-1)
    lab = xi == 1
    if not np.any(lab):
        raise InsufficientDataError("no labels were collected")
    if np.any(np.isnan(labels[lab])):
        raise DataError("a labeled item is missing its label")
    X = pool.x[lab] if spec.kind in ("linear", "logistic") else np.zeros((int(lab.sum()), 1))
    return solve_weighted(spec, (X, labels[lab], np.ones(int(lab.sum()))))


def gradient_increments(pool: Pool, plan: SamplingPlan, labels, spec: ProblemSpec, theta) -> np.ndarray:
    """Per-item plug-in gradient increments, one row per pool item."""
    labels = _check_plan_and_labels(pool, plan, labels)
    f = _predictions(pool)
    X = pool.x if spec.kind in ("linear", "logistic") else None
    g = grad_matrix(spec, theta, X, f)
    lab = plan.xi == 1
    if np.any(lab):
        gy = grad_matrix(spec, theta, None if X is None else X[lab], labels[lab])
        g = g.astype(float)
        g[lab] += (gy - g[lab]) / plan.pi[lab][:, None]
    return g


def _hessian_for(pool, plan, labels, spec, theta):
    if spec.kind == "quantile":
        lab = plan.xi == 1
        return density_hessian(labels[lab], 1.0 / plan.pi[lab], float(np.asarray(theta).reshape(-1)[0]))
    X = pool.x if spec.kind in ("linear", "logistic") else None
    return hessian_average(spec, theta, X)


def sandwich_covariance(pool: Pool, plan: SamplingPlan, labels, spec: ProblemSpec, theta) -> np.ndarray:
    """Plug-in sandwich covariance H^{-1} V H^{-1} (scale: variance of one increment)."""
    g = gradient_increments(pool, plan, labels, spec, theta)
    centered = g - g.mean(axis=0)
    V = centered.T @ centered / g.shape[0]
    labels = np.asarray(labels, dtype=float).reshape(-1)
    H = _hessian_for(pool, plan, labels, spec, theta)
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        raise SingularDesignError("empirical Hessian is singular") from None
    sigma = Hinv @ V @ Hinv.T
    return 0.5 * (sigma + sigma.T)


def classical_covariance(pool: Pool, xi, labels, spec: ProblemSpec, theta) -> np.ndarray:
    """Sandwich covariance of the classical estimator over the labeled subset."""
    xi = np.asarray(xi).astype(np.int64)
    labels = np.asarray(labels, dtype=float).reshape(-1)
    lab = xi == 1
    if not np.any(lab):
        raise InsufficientDataError("no labels were collected")
    X = pool.x[lab] if spec.kind in ("linear", "logistic") else None
    g = grad_matrix(spec, theta, X, labels[lab])
    centered = g - g.mean(axis=0)
    V = centered.T @ centered / g.shape[0]
    if spec.kind == "quantile":
        H = density_hessian(labels[lab], None, float(np.asarray(theta).reshape(-1)[0]))
    else:
        H = hessian_average(spec, theta, X)
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        raise SingularDesignError("empirical Hessian is singular") from None
    sigma = Hinv @ V @ Hinv.T
    return 0.5 * (sigma + sigma.T)


@dataclass(frozen=True)
class InferenceReport:
    """Estimate, covariance, and per-coordinate intervals for one method run."""

    method: str
    theta: np.ndarray
    sigma: np.ndarray
    intervals: tuple
    alpha: float
    n: int
    n_lab: int

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (len(theta), len(theta)):
            raise DataError("covariance shape does not match the estimate")
        if not np.allclose(sigma, sigma.T, atol=1e-8):
            raise DataError("covariance must be symmetric")
        if np.linalg.eigvalsh(0.5 * (sigma + sigma.T)).min() < -1e-8:
            raise DataError("covariance must be positive semidefinite")
        for j, (lo, hi) in enumerate(self.intervals):
            if not (lo <= theta[j] <= hi):
                raise DataError(f"interval for coordinate {j} does not contain the estimate")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma", sigma)

    def rows(self):
        """CSV rows: method, coordinate, estimate, lo, hi, n, n_lab, alpha."""
        return [
            (self.method, j, float(self.theta[j]), float(lo), float(hi), self.n, self.n_lab, self.alpha)
            for j, (lo, hi) in enumerate(self.intervals)
        ]


def build_report(method: str, theta, sigma, n: int, n_lab: int, alpha: float, scale_n: int | None = None) -> InferenceReport:
    """Assemble a report with Wald intervals on every coordinate.

    scale_n is the sample size in the variance scaling (defaults to n; the
    classical baseline passes its label count).
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    m = n if scale_n is None else scale_n
    intervals = tuple(wald_interval(float(theta[j]), float(sigma[j, j]), m, alpha) for j in range(len(theta)))
    return InferenceReport(
        method=method, theta=theta, sigma=sigma, intervals=intervals, alpha=alpha, n=n, n_lab=n_lab
    )

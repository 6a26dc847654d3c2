"""Estimation targets as M-estimation problems.

Each problem kind supplies a per-sample loss, its gradient, and (where it
exists pointwise) its Hessian. A weighted solver minimizes sums of
weighted losses; weights may be negative, which is how prediction terms
enter the corrected objectives.

Kinds:
  mean       l(y; theta) = (y - theta)^2 / 2, scalar theta
  linear     l(x, y; theta) = (x'theta - y)^2 / 2
  logistic   l(x, y; theta) = -y x'theta + log(1 + exp(x'theta))
  quantile   pinball loss at level q, scalar theta
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    DegenerateInputError,
    InsufficientDataError,
    SingularDesignError,
    SolverError,
)

KINDS = ("mean", "linear", "logistic", "quantile")

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class ProblemSpec:
    """What is being estimated.

    kind  one of "mean", "linear", "logistic", "quantile"
    dim   parameter dimension (1 for mean/quantile)
    j     coordinate of interest for reporting
    q     quantile level, required iff kind == "quantile"
    """

    kind: str
    dim: int = 1
    j: int = 0
    q: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.kind in ("mean", "quantile") and self.dim != 1:
            raise ValueError(f"{self.kind} problems are one-dimensional")
        if not (0 <= self.j < self.dim):
            raise ValueError(f"target coordinate j={self.j} outside [0, {self.dim})")
        if self.kind == "quantile":
            if self.q is None or not (0 < self.q < 1):
                raise ValueError("quantile problems need q in (0, 1)")
        elif self.q is not None:
            raise ValueError("q is only meaningful for quantile problems")


@dataclass(frozen=True)
class WeightedSample:
    x: np.ndarray
    y: float
    w: float


def _sigmoid(s):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    return out


def loss_values(spec: ProblemSpec, theta, X, y) -> np.ndarray:
    """Vector of per-sample losses at theta."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if spec.kind == "mean":
        return 0.5 * (y - theta[0]) ** 2
    if spec.kind == "quantile":
        u = y - theta[0]
        return u * (spec.q - (u < 0))
    X = np.asarray(X, dtype=float)
    s = X @ theta
    if spec.kind == "linear":
        return 0.5 * (s - y) ** 2
    # logistic: -y*s + log(1 + e^s), computed stably
    return -y * s + np.logaddexp(0.0, s)


def grad_matrix(spec: ProblemSpec, theta, X, y) -> np.ndarray:
    """Per-sample loss gradients, one row per sample."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if spec.kind == "mean":
        return (theta[0] - y)[:, None]
    if spec.kind == "quantile":
        # subgradient convention: q - 1 below theta, q above, 0 at ties
        g = np.where(y < theta[0], spec.q - 1.0, np.where(y > theta[0], spec.q, 0.0))
        return g[:, None]
    X = np.asarray(X, dtype=float)
    s = X @ theta
    if spec.kind == "linear":
        return (s - y)[:, None] * X
    return (_sigmoid(s) - y)[:, None] * X


def hessian_average(spec: ProblemSpec, theta, X, w=None) -> np.ndarray:
    """Weighted average of per-sample loss Hessians (weights default to 1)."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if spec.kind == "quantile":
        raise ValueError("quantile loss has no pointwise Hessian; use density_hessian")
    if spec.kind == "mean":
        if w is None:
            return np.array([[1.0]])
        return np.array([[float(np.mean(np.asarray(w, dtype=float)))]])
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[0]
    if spec.kind == "linear":
        scale = np.ones(m) if w is None else np.asarray(w, dtype=float)
    else:
        p = _sigmoid(X @ theta)
        scale = p * (1.0 - p)
        if w is not None:
            scale = scale * np.asarray(w, dtype=float)
    return (X * scale[:, None]).T @ X / m


def loss_value(spec: ProblemSpec, theta, x, y) -> float:
    return float(loss_values(spec, theta, None if x is None else np.atleast_2d(x), [y])[0])


def loss_grad(spec: ProblemSpec, theta, x, y) -> np.ndarray:
    return grad_matrix(spec, theta, None if x is None else np.atleast_2d(x), [y])[0]


def loss_hessian(spec: ProblemSpec, theta, x) -> np.ndarray:
    return hessian_average(spec, theta, None if x is None else np.atleast_2d(x))


def density_hessian(y, weights, theta_hat: float) -> np.ndarray:
    """Gaussian-kernel density estimate at theta_hat, as a 1x1 Hessian.

    Bandwidth is 1.06 * sd * m^(-1/5) with m the effective (Kish) sample
    size, so the result is invariant to rescaling all weights.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if w.shape != y.shape:
        raise DataError("labels and weights differ in length")
    if np.any(w < 0):
        raise DataError("density weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise DegenerateInputError("zero effective weight")
    m_eff = total**2 / np.sum(w**2)
    if m_eff < 10:
        raise InsufficientDataError(f"need at least 10 effective samples, have {m_eff:.2f}")
    mu = np.sum(w * y) / total
    sd = math.sqrt(np.sum(w * (y - mu) ** 2) / total)
    if sd == 0:
        raise DegenerateInputError("labels have zero spread")
    h = 1.06 * sd * m_eff ** (-0.2)
    z = (theta_hat - y) / h
    dens = np.sum(w * np.exp(-0.5 * z**2)) / (h * total * math.sqrt(2 * math.pi))
    return np.array([[dens]])


def _as_arrays(samples):
    if isinstance(samples, tuple) and len(samples) == 3:
        X, y, w = samples
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        w = np.asarray(w, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0] or y.shape[0] != w.shape[0]:
            raise DataError("sample arrays differ in length")
        return X, y, w
    X = np.atleast_2d(np.array([np.asarray(s.x, dtype=float).reshape(-1) for s in samples]))
    y = np.array([s.y for s in samples], dtype=float)
    w = np.array([s.w for s in samples], dtype=float)
    return X, y, w


def _solve_quantile(q, y, w):
    total = w.sum()
    if total <= 0:
        raise DegenerateInputError("total weight must be positive")
    if np.all(w >= 0):
        order = np.argsort(y, kind="stable")
        cw = np.cumsum(w[order])
        k = int(np.searchsorted(cw, q * total, side="left"))
        return float(y[order][min(k, len(y) - 1)])
    # Mixed signs: the objective is piecewise linear with kinks at the label
    # values and increasing tails (total weight > 0), so scanning the kinks
    # finds a global minimizer exactly.
    cand = np.unique(y)
    best_val = math.inf
    best = cand[0]
    for start in range(0, len(cand), 512):
        block = cand[start : start + 512]
        u = y[None, :] - block[:, None]
        obj = (u * (q - (u < 0))) @ w
        i = int(np.argmin(obj))
        if obj[i] < best_val:
            best_val = float(obj[i])
            best = float(block[i])
    return best


def _solve_logistic(X, y, w):
    if y.size and (y.min() < -1e-9 or y.max() > 1 + 1e-9):
        raise DataError("logistic labels (or label predictions) must lie in [0, 1]")
    m, d = X.shape
    theta = np.zeros(d)

    def objective(t):
        return float(np.dot(w, loss_values(ProblemSpec("logistic", d), t, X, y)) / m)

    obj = objective(theta)
    for _ in range(NEWTON_MAX_ITER):
        p = _sigmoid(X @ theta)
        g = X.T @ (w * (p - y)) / m
        gnorm = float(np.linalg.norm(g))
        if gnorm <= NEWTON_TOL:
            return theta
        H = (X * (w * p * (1.0 - p))[:, None]).T @ X / m
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            raise SingularDesignError("singular Hessian in logistic solve") from None
        # step-halving line search
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            cand_obj = objective(cand)
            if cand_obj < obj:
                theta, obj = cand, cand_obj
                break
            t *= 0.5
        else:
            # no representable decrease left; effectively stationary points pass
            if gnorm <= 1e-6:
                return theta
            raise SolverError(
                f"logistic Newton stalled at gradient norm {gnorm:.3e}",
                last_iterate=theta,
                grad_norm=gnorm,
            )
    p = _sigmoid(X @ theta)
    gnorm = float(np.linalg.norm(X.T @ (w * (p - y)) / m))
    if gnorm <= NEWTON_TOL:
        return theta
    raise SolverError(
        f"logistic Newton did not converge in {NEWTON_MAX_ITER} iterations"
        f" (gradient norm {gnorm:.3e})",
        last_iterate=theta,
        grad_norm=gnorm,
    )


def solve_weighted(spec: ProblemSpec, samples) -> np.ndarray:
    """Minimize the weighted empirical loss.

    samples is either a list of WeightedSample or an (X, y, w) triple of
    arrays. Returns the parameter vector (length spec.dim).
    """
    X, y, w = _as_arrays(samples)
    if y.size == 0:
        raise InsufficientDataError("no samples to solve on")
    if spec.kind == "mean":
        total = w.sum()
        if total <= 0:
            raise DegenerateInputError("total weight must be positive")
        return np.array([float(np.dot(w, y) / total)])
    if spec.kind == "quantile":
        return np.array([_solve_quantile(spec.q, y, w)])
    if X.shape[1] != spec.dim:
        raise DataError(f"covariates have dimension {X.shape[1]}, spec says {spec.dim}")
    if spec.kind == "linear":
        gram = (X * w[:, None]).T @ X
        rhs = X.T @ (w * y)
        try:
            return np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            raise SingularDesignError("singular design in weighted least squares") from None
    return _solve_logistic(X, y, w)

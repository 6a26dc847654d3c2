"""Built-in predictors, uncertainty measures, and fine-tuning.

Predictors are immutable: fitting or fine-tuning returns a new object and
bumps its version. Fine-tuning refits on the full accumulated buffer, so
the result depends only on the cumulative training data, not on how it
arrived in batches.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, SingularDesignError, SolverError, StateError

DEFAULT_LAMBDA_SCALE = 1e-3  # default ridge penalty is this times n_train


def classification_uncertainty(probs) -> np.ndarray | float:
    """Normalized uncertainty K/(K-1) * (1 - max prob), in [0, 1].

    For binary problems this equals 2*min(p, 1-p). Accepts one probability
    vector or a matrix of row vectors.
    """
    p = np.asarray(probs, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    k = p.shape[1]
    if k < 2:
        raise DataError("need at least two classes")
    if np.any(p < -1e-9) or np.any(p > 1 + 1e-9):
        raise DataError("probabilities must lie in [0, 1]")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise DataError("probabilities must sum to 1 (tolerance 1e-6)")
    u = k / (k - 1.0) * (1.0 - p.max(axis=1))
    u = np.clip(u, 0.0, 1.0)
    return float(u[0]) if single else u


def _stack_buffer(old_x, old_y, X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise DataError("covariates and targets differ in length")
    if old_x is None:
        return X, y
    return np.vstack([old_x, X]), np.concatenate([old_y, y])


def _design(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([np.ones((X.shape[0], 1)), X])


@dataclass(frozen=True)
class RidgePredictor:
    """Linear model with an unpenalized intercept.

    lam=None uses the default penalty 1e-3 * n_train; lam=0 is plain least
    squares.
    """

    lam: float | None = None
    coef: np.ndarray | None = None
    train_x: np.ndarray | None = None
    train_y: np.ndarray | None = None
    version: int = 0

    def finetune(self, X, y) -> "RidgePredictor":
        bx, by = _stack_buffer(self.train_x, self.train_y, X, y)
        Z = _design(bx)
        lam = DEFAULT_LAMBDA_SCALE * len(by) if self.lam is None else self.lam
        pen = lam * np.eye(Z.shape[1])
        pen[0, 0] = 0.0
        try:
            coef = np.linalg.solve(Z.T @ Z + pen, Z.T @ by)
        except np.linalg.LinAlgError:
            raise SingularDesignError("singular ridge system") from None
        return replace(self, coef=coef, train_x=bx, train_y=by, version=self.version + 1)

    fit = finetune

    def predict_batch(self, X) -> np.ndarray:
        if self.coef is None:
            raise StateError("predictor is not fitted")
        return _design(X) @ self.coef

    def predict(self, x) -> float:
        return float(self.predict_batch(np.atleast_2d(x))[0])


def _sigmoid(s):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    return out


@dataclass(frozen=True)
class LogisticPredictor:
    """Logistic regression with an unpenalized intercept and ridge penalty.

    predict() returns the positive-class probability; predict_proba()
    returns (P[y=0], P[y=1]). Probabilities are used raw, no recalibration.
    """

    lam: float | None = None
    coef: np.ndarray | None = None
    train_x: np.ndarray | None = None
    train_y: np.ndarray | None = None
    version: int = 0

    def finetune(self, X, y) -> "LogisticPredictor":
        bx, by = _stack_buffer(self.train_x, self.train_y, X, y)
        if by.min() < 0 or by.max() > 1:
            raise DataError("logistic targets must lie in [0, 1]")
        Z = _design(bx)
        m, d = Z.shape
        lam = DEFAULT_LAMBDA_SCALE * m if self.lam is None else self.lam
        mask = np.ones(d)
        mask[0] = 0.0
        coef = np.zeros(d)

        def objective(c):
            s = Z @ c
            return float(np.mean(-by * s + np.logaddexp(0.0, s)) + 0.5 * lam / m * np.sum((mask * c) ** 2))

        obj = objective(coef)
        for _ in range(100):
            p = _sigmoid(Z @ coef)
            g = Z.T @ (p - by) / m + lam / m * mask * coef
            if np.linalg.norm(g) <= 1e-10:
                break
            H = (Z * (p * (1.0 - p))[:, None]).T @ Z / m + lam / m * np.diag(mask)
            try:
                step = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                raise SingularDesignError("singular Hessian in logistic fit") from None
            t = 1.0
            for _ in range(60):
                cand = coef + t * step
                cand_obj = objective(cand)
                if cand_obj < obj:
                    coef, obj = cand, cand_obj
                    break
                t *= 0.5
            else:
                # float64 cannot represent a further decrease; accept the
                # iterate if it is already effectively stationary
                if np.linalg.norm(g) <= 1e-6:
                    break
                raise SolverError("logistic fit stalled", last_iterate=coef, grad_norm=float(np.linalg.norm(g)))
        return replace(self, coef=coef, train_x=bx, train_y=by, version=self.version + 1)

    fit = finetune

    def predict_batch(self, X) -> np.ndarray:
        if self.coef is None:
            raise StateError("predictor is not fitted")
        return _sigmoid(_design(X) @ self.coef)

    def predict(self, x) -> float:
        return float(self.predict_batch(np.atleast_2d(x))[0])

    def predict_proba(self, x) -> np.ndarray:
        p = self.predict(x)
        return np.array([1.0 - p, p])

    def proba_batch(self, X) -> np.ndarray:
        p = self.predict_batch(X)
        return np.column_stack([1.0 - p, p])


@dataclass(frozen=True)
class KNearestPredictor:
    """k-nearest-neighbor regressor (Euclidean distance, mean of neighbor labels)."""

    k: int = 5
    train_x: np.ndarray | None = None
    train_y: np.ndarray | None = None
    version: int = 0

    def finetune(self, X, y) -> "KNearestPredictor":
        if self.k < 1:
            raise DataError("k must be positive")
        bx, by = _stack_buffer(self.train_x, self.train_y, X, y)
        return replace(self, train_x=bx, train_y=by, version=self.version + 1)

    fit = finetune

    def predict_batch(self, X) -> np.ndarray:
        if self.train_x is None:
            raise StateError("predictor is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k = min(self.k, len(self.train_y))
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            d2 = np.sum((self.train_x - row) ** 2, axis=1)
            nearest = np.argpartition(d2, k - 1)[:k] if k < len(d2) else np.arange(len(d2))
            out[i] = self.train_y[nearest].mean()
        return out

    def predict(self, x) -> float:
        return float(self.predict_batch(np.atleast_2d(x))[0])


_KINDS = {"ridge": RidgePredictor, "logistic": LogisticPredictor, "knn": KNearestPredictor}


def make_predictor(kind: str, **hyper):
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown predictor kind {kind!r} (choose from {sorted(_KINDS)})") from None
    return cls(**hyper)


def finetune(model, X, y):
    """Refit `model` on its accumulated buffer plus the new batch."""
    return model.finetune(X, y)


def predict(model, x):
    return model.predict(x)


@dataclass(frozen=True)
class ErrorModel:
    """Predicts the magnitude of the prediction error; outputs clamped at 0."""

    model: object

    @property
    def version(self) -> int:
        return self.model.version

    def predict(self, x) -> float:
        return max(0.0, self.model.predict(x))

    def predict_batch(self, X) -> np.ndarray:
        return np.maximum(0.0, self.model.predict_batch(X))

    def finetune(self, X, targets) -> "ErrorModel":
        return ErrorModel(self.model.finetune(X, targets))


def fit_error_model(X, f, y, kind: str = "ridge", **hyper) -> ErrorModel:
    """Train a model of |f(x) - y| on labeled pairs."""
    f = np.asarray(f, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if f.shape != y.shape:
        raise DataError("f and y differ in length")
    targets = np.abs(f - y)
    return ErrorModel(make_predictor(kind, **hyper).fit(X, targets))


def crossfit_predictions(kind: str, X, y, folds: int = 5, **hyper) -> np.ndarray:
    """Out-of-fold predictions via deterministic interleaved folds.

    Falls back to in-sample predictions when the data cannot support the
    requested number of folds.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n = len(y)
    if n < 2 * folds:
        model = make_predictor(kind, **hyper).fit(X, y)
        return model.predict_batch(X)
    assignment = np.arange(n) % folds
    out = np.empty(n)
    for fold in range(folds):
        hold = assignment == fold
        model = make_predictor(kind, **hyper).fit(X[~hold], y[~hold])
        out[hold] = model.predict_batch(X[hold])
    return out

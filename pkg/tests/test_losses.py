"""Loss derivatives, the density Hessian, and the weighted M-estimation solver."""

import numpy as np
import pytest

from activeinfer.core import RngSpec
from activeinfer.errors import DegenerateInputError, SingularDesignError
from activeinfer.losses import (
    ProblemSpec,
    density_hessian,
    grad_matrix,
    hessian_average,
    loss_grad,
    loss_hessian,
    loss_value,
    solve_weighted,
)

MEAN = ProblemSpec("mean")
LIN2 = ProblemSpec("linear", dim=2)
LOG2 = ProblemSpec("logistic", dim=2)
MED = ProblemSpec("quantile", q=0.5)


def test_grad_worked_values():
    assert np.allclose(loss_grad(MEAN, np.array([2.0]), None, 5.0), [-3.0])
    g = loss_grad(LIN2, np.zeros(2), np.array([1.0, 2.0]), 3.0)
    assert np.allclose(g, [-3.0, -6.0])
    g = loss_grad(LOG2, np.zeros(2), np.array([1.0, 4.0]), 0.5)
    assert np.allclose(g, [0.0, 0.0])


def test_hessian_worked_values():
    assert np.allclose(loss_hessian(MEAN, np.array([2.0]), None), [[1.0]])
    H = loss_hessian(LIN2, np.zeros(2), np.array([1.0, 2.0]))
    assert np.allclose(H, [[1.0, 2.0], [2.0, 4.0]])
    H = loss_hessian(LOG2, np.zeros(2), np.array([1.0, 0.0]))
    assert np.allclose(H, 0.25 * np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        loss_hessian(MED, np.array([0.0]), None)


def test_quantile_subgradient_convention():
    g_below = loss_grad(MED, np.array([2.0]), None, 1.0)  # y < theta
    g_above = loss_grad(MED, np.array([2.0]), None, 3.0)
    g_tie = loss_grad(MED, np.array([2.0]), None, 2.0)
    assert np.allclose(g_below, [-0.5]) and np.allclose(g_above, [0.5])
    assert np.allclose(g_tie, [0.0])


def _fd_grad(spec, theta, x, y, h=1e-6):
    d = len(theta)
    out = np.empty(d)
    for k in range(d):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        out[k] = (loss_value(spec, tp, x, y) - loss_value(spec, tm, x, y)) / (2 * h)
    return out


def test_gradient_matches_finite_differences():
    gen = RngSpec(100).generator()
    for _ in range(100):
        x = gen.standard_normal(2)
        for spec, y in ((MEAN, gen.standard_normal()), (LIN2, gen.standard_normal()),
                        (LOG2, float(gen.integers(0, 2)))):
            theta = gen.standard_normal(spec.dim)
            xa = x[: spec.dim] if spec.dim > 1 else None
            g = loss_grad(spec, theta, xa, y)
            fd = _fd_grad(spec, theta, xa, y)
            assert np.allclose(g, fd, rtol=1e-6, atol=1e-6)


def test_hessian_matches_finite_differences():
    gen = RngSpec(101).generator()
    h = 1e-5
    for _ in range(100):
        for spec in (MEAN, LIN2, LOG2):
            theta = gen.standard_normal(spec.dim)
            x = gen.standard_normal(spec.dim) if spec.dim > 1 else None
            y = float(gen.integers(0, 2)) if spec.kind == "logistic" else gen.standard_normal()
            H = loss_hessian(spec, theta, x)
            fd = np.empty_like(H)
            for k in range(spec.dim):
                tp, tm = theta.copy(), theta.copy()
                tp[k] += h
                tm[k] -= h
                fd[:, k] = (loss_grad(spec, tp, x, y) - loss_grad(spec, tm, x, y)) / (2 * h)
            assert np.allclose(H, fd, rtol=1e-5, atol=1e-5)


def test_glm_hessian_ignores_labels():
    # the GLM Hessian depends on x and theta only; the signature has no y
    theta = np.array([0.3, -0.7])
    x = np.array([1.0, 2.0])
    assert np.array_equal(loss_hessian(LIN2, theta, x), loss_hessian(LIN2, theta, x))
    assert np.array_equal(loss_hessian(LOG2, theta, x), loss_hessian(LOG2, theta, x))


def test_density_hessian_uniform_oracle():
    gen = RngSpec(5, 9).generator()
    y = gen.random(10000)
    val = density_hessian(y, None, 0.5)[0, 0]
    assert abs(val - 1.0) <= 0.1


def test_density_hessian_degenerate_and_weight_scale():
    with pytest.raises(DegenerateInputError):
        density_hessian(np.full(50, 3.0), None, 3.0)
    gen = RngSpec(6).generator()
    y = gen.standard_normal(500)
    w = np.abs(gen.standard_normal(500)) + 0.1
    a = density_hessian(y, w, 0.0)
    b = density_hessian(y, 2 * w, 0.0)
    assert np.allclose(a, b)


def test_solve_weighted_mean():
    X = np.zeros((2, 1))
    assert np.allclose(solve_weighted(MEAN, (X, np.array([1.0, 3.0]), np.array([1.0, 1.0]))), [2.0])
    assert np.allclose(solve_weighted(MEAN, (X, np.array([1.0, 3.0]), np.array([1.0, 3.0]))), [2.5])


def test_solve_weighted_median():
    X = np.zeros((3, 1))
    out = solve_weighted(MED, (X, np.array([1.0, 2.0, 3.0]), np.ones(3)))
    assert np.allclose(out, [2.0])


def test_solve_weighted_logistic_symmetric():
    # symmetric balanced design forces the optimum to the origin
    X = np.array([[1.0, 0.5], [-1.0, -0.5], [2.0, -1.0], [-2.0, 1.0]])
    y = np.array([1.0, 0.0, 1.0, 0.0])
    theta = solve_weighted(LOG2, (np.vstack([X, X]), np.concatenate([y, 1 - y]), np.ones(8)))
    g = grad_matrix(LOG2, theta, np.vstack([X, X]), np.concatenate([y, 1 - y])).mean(axis=0)
    assert np.linalg.norm(theta) < 1e-6
    assert np.linalg.norm(g) < 1e-8


def test_solver_optimality_smooth_kinds():
    gen = RngSpec(102).generator()
    for _ in range(20):
        n = 40
        X = gen.standard_normal((n, 2))
        # estimator-style weights: (1 - xi/pi) on one copy, xi/pi on the other
        pi = gen.uniform(0.3, 1.0, n)
        xi = (gen.random(n) < pi).astype(float)
        w = np.concatenate([1 - xi / pi, (xi / pi)[xi == 1]])
        for spec in (LIN2, LOG2):
            y = (gen.random(n) < 0.5).astype(float) if spec.kind == "logistic" else gen.standard_normal(n)
            f = np.clip(y + 0.3 * gen.standard_normal(n), 0, 1) if spec.kind == "logistic" else y + 0.3 * gen.standard_normal(n)
            Xs = np.vstack([X, X[xi == 1]])
            ys = np.concatenate([f, y[xi == 1]])
            theta = solve_weighted(spec, (Xs, ys, w))
            g = (w[:, None] * grad_matrix(spec, theta, Xs, ys)).sum(axis=0) / n
            assert np.linalg.norm(g) <= 1e-7


def test_quantile_solver_is_global_minimum():
    gen = RngSpec(103).generator()
    for _ in range(25):
        n = 15
        y = gen.standard_normal(n)
        w = gen.standard_normal(n)  # mixed signs
        w[0] = abs(w[0]) + 1.0  # keep total weight positive so a minimum exists
        if w.sum() <= 0.1:
            w[0] += 1.0 - w.sum()
        spec = ProblemSpec("quantile", q=float(gen.uniform(0.2, 0.8)))

        def obj(t):
            r = y - t
            return float(np.sum(w * np.where(r >= 0, spec.q * r, (spec.q - 1) * r)))

        theta = float(solve_weighted(spec, (np.zeros((n, 1)), y, w))[0])
        candidates = np.concatenate([y, y - 1e-6, y + 1e-6, [y.min() - 1, y.max() + 1]])
        best = min(obj(c) for c in candidates)
        assert obj(theta) <= best + 1e-9


def test_solve_weighted_degenerate_and_singular():
    with pytest.raises(DegenerateInputError):
        solve_weighted(MEAN, (np.zeros((2, 1)), np.array([1.0, 2.0]), np.array([1.0, -1.0])))
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])  # rank 1
    with pytest.raises(SingularDesignError):
        solve_weighted(LIN2, (X, np.array([1.0, 2.0, 3.0]), np.ones(3)))


def test_hessian_average_quantile_rejected():
    with pytest.raises(ValueError):
        hessian_average(MED, np.array([0.0]), None)


def test_problem_spec_validation():
    with pytest.raises(ValueError):
        ProblemSpec("mean", dim=2)
    with pytest.raises(ValueError):
        ProblemSpec("linear", dim=2, j=2)
    with pytest.raises(ValueError):
        ProblemSpec("quantile", q=1.5)
    with pytest.raises(ValueError):
        ProblemSpec("nonsense")

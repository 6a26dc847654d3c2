"""Odds ratio between two groups, with delta-method intervals on the log scale.

Each group mean is estimated by the batch pipeline on its own sub-pool
(budget split proportionally to group sizes); the point estimates and
their variances combine into an interval for the ratio of odds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .batch import normal_quantile
from .errors import DataError, DegenerateInputError


def _check_mean(mu, name):
    if not (0.0 < mu < 1.0):
        raise DegenerateInputError(f"{name} must lie strictly inside (0, 1), got {mu}")


def odds_ratio(mu1: float, mu0: float) -> float:
    """(mu1 / (1-mu1)) / (mu0 / (1-mu0))."""
    _check_mean(mu1, "mu1")
    _check_mean(mu0, "mu0")
    return (mu1 / (1.0 - mu1)) / (mu0 / (1.0 - mu0))


@dataclass(frozen=True)
class OddsRatioInputs:
    """Group means with their variance estimates (scale: variance of one increment)."""

    mu1: float
    var1: float
    n1: int
    mu0: float
    var0: float
    n0: int

    def __post_init__(self):
        _check_mean(self.mu1, "mu1")
        _check_mean(self.mu0, "mu0")
        if self.var1 < 0 or self.var0 < 0:
            raise DataError("variances must be nonnegative")
        if self.n1 < 1 or self.n0 < 1:
            raise DataError("group sizes must be positive")


def odds_ratio_interval(inp: OddsRatioInputs, alpha: float) -> tuple[float, float]:
    """Delta-method interval, built on the log-odds-ratio scale and exponentiated."""
    if not (0 < alpha < 1):
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")
    point = odds_ratio(inp.mu1, inp.mu0)
    d1 = inp.mu1 * (1.0 - inp.mu1)
    d0 = inp.mu0 * (1.0 - inp.mu0)
    se = math.sqrt(inp.var1 / (inp.n1 * d1 * d1) + inp.var0 / (inp.n0 * d0 * d0))
    z = normal_quantile(1.0 - alpha / 2.0)
    log_point = math.log(point)
    return math.exp(log_point - z * se), math.exp(log_point + z * se)


def split_budget(n1: int, n0: int, n_b: float) -> tuple[float, float]:
    """Split a total label budget across two groups proportionally to their sizes."""
    if n1 < 1 or n0 < 1:
        raise DataError("group sizes must be positive")
    if n_b <= 0 or n_b > n1 + n0:
        raise DataError("budget must lie in (0, n1 + n0]")
    share = n1 / (n1 + n0)
    return n_b * share, n_b * (1.0 - share)

"""Nonasymptotic intervals for the mean via betting capital processes.

Increments from the corrected estimator are bounded once the label range
and the propensity floor are known. Rescaled to [0, 1], a pair of capital
processes bets against each candidate mean on a grid (one process per
direction); candidates whose capital stays below the threshold survive,
and the interval is their convex hull, widened by one grid spacing so a
true mean falling between two evaluated candidates is never lost to
discretization. Validity is finite-sample: under the true mean the hedged
capital is a supermartingale, so it rarely grows large. These intervals
over-cover by design and are wider than the asymptotic ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

DEFAULT_GRID_SIZE = 1000
_CHUNK = 256


@dataclass(frozen=True)
class IncrementBounds:
    lo: float
    hi: float


@dataclass(frozen=True)
class BettingResult:
    """Interval endpoints; degenerate=True means no grid point survived and the
    point minimizing terminal capital was reported instead."""

    lo: float
    hi: float
    degenerate: bool = False


def increment_bounds(y_lo: float, y_hi: float, pi_min: float) -> IncrementBounds:
    """Range of one corrected increment given the label range and propensity floor."""
    if not (y_lo < y_hi):
        raise DataError("need y_lo < y_hi")
    if not (0 < pi_min <= 1):
        raise DataError(f"pi_min must lie in (0, 1], got {pi_min}")
    spread = y_hi - y_lo
    return IncrementBounds(y_lo - spread / pi_min, y_hi + spread / pi_min)


def bet_rates(z, alpha: float) -> np.ndarray:
    """Adaptive bet magnitudes r_s = sqrt(2 log(2/alpha) / (sig2_{s-1} * s)).

    sig2 is the running variance of the rescaled increments with a 1/4
    prior; r_s depends only on z_1..z_{s-1}, keeping the bets predictable.
    """
    z = np.asarray(z, dtype=float)
    n = len(z)
    t = np.arange(1, n + 1)
    mu = (0.5 + np.cumsum(z)) / (t + 1)
    dev2 = np.cumsum((z - mu) ** 2)
    sig2 = np.concatenate([[0.25], (0.25 + dev2) / (t + 1)])  # sig2[s] uses z_1..z_s
    return np.sqrt(2.0 * math.log(2.0 / alpha) / (sig2[:n] * t))


def _capital_terminal(z, grid, alpha):
    """Terminal log-capital of both directional processes at every grid point."""
    n = len(z)
    cap = 0.5 / np.maximum(grid, 1.0 - grid)
    r = bet_rates(z, alpha)
    log_up = np.zeros(len(grid))
    log_dn = np.zeros(len(grid))
    for start in range(0, n, _CHUNK):
        zc = z[start : start + _CHUNK]
        lam = np.minimum(r[start : start + _CHUNK, None], cap[None, :])
        dz = zc[:, None] - grid[None, :]
        log_up += np.sum(np.log1p(lam * dz), axis=0)
        log_dn += np.sum(np.log1p(-lam * dz), axis=0)
    return log_up, log_dn


def _rescale(increments, bounds):
    x = np.asarray(increments, dtype=float).reshape(-1)
    span = bounds.hi - bounds.lo
    if span <= 0:
        raise DataError("empty increment range")
    if x.size and (x.min() < bounds.lo - 1e-9 * span or x.max() > bounds.hi + 1e-9 * span):
        raise DataError("an increment falls outside the stated bounds")
    return np.clip((x - bounds.lo) / span, 0.0, 1.0)


def _expand(g_lo, g_hi, step, bounds, span):
    """One grid spacing of slack on each side, clipped to the hard bounds."""
    return (
        bounds.lo + max(0.0, g_lo - step) * span,
        bounds.lo + min(1.0, g_hi + step) * span,
    )


def betting_interval(increments, bounds: IncrementBounds, alpha: float, grid_size: int = DEFAULT_GRID_SIZE) -> BettingResult:
    """Convex hull of grid candidates whose terminal capital stays below 1/alpha."""
    if not (0 < alpha < 1):
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")
    if grid_size < 2:
        raise DataError("grid_size must be at least 2")
    z = _rescale(increments, bounds)
    span = bounds.hi - bounds.lo
    if z.size == 0:
        return BettingResult(bounds.lo, bounds.hi, False)
    grid = np.linspace(0.0, 1.0, grid_size)
    log_up, log_dn = _capital_terminal(z, grid, alpha)
    # hedged capital max(W+/2, W-/2) < 1/alpha  <=>  both processes < 2/alpha
    thresh = math.log(2.0 / alpha)
    alive = (log_up < thresh) & (log_dn < thresh)
    step = 1.0 / (grid_size - 1)
    if not alive.any():
        k = int(np.argmin(np.maximum(log_up, log_dn)))
        return BettingResult(*_expand(grid[k], grid[k], step, bounds, span), True)
    idx = np.flatnonzero(alive)
    return BettingResult(*_expand(grid[idx[0]], grid[idx[-1]], step, bounds, span), False)


def betting_confidence_sequence(increments, bounds: IncrementBounds, alpha: float, grid_size: int = DEFAULT_GRID_SIZE) -> list:
    """Running intervals with cumulative rejection: valid at every step at once.

    A candidate is gone for good once its capital ever reaches the
    threshold, so the reported intervals are nested.
    """
    if not (0 < alpha < 1):
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")
    z = _rescale(increments, bounds)
    span = bounds.hi - bounds.lo
    grid = np.linspace(0.0, 1.0, grid_size)
    cap = 0.5 / np.maximum(grid, 1.0 - grid)
    r = bet_rates(z, alpha) if z.size else np.zeros(0)
    thresh = math.log(2.0 / alpha)
    log_up = np.zeros(grid_size)
    log_dn = np.zeros(grid_size)
    alive = np.ones(grid_size, dtype=bool)
    step = 1.0 / (grid_size - 1)
    out = []
    last = BettingResult(bounds.lo, bounds.hi, False)
    for s in range(len(z)):
        lam = np.minimum(r[s], cap)
        dz = z[s] - grid
        log_up += np.log1p(lam * dz)
        log_dn += np.log1p(-lam * dz)
        alive &= (log_up < thresh) & (log_dn < thresh)
        if alive.any():
            idx = np.flatnonzero(alive)
            last = BettingResult(*_expand(grid[idx[0]], grid[idx[-1]], step, bounds, span), False)
        else:
            k = int(np.argmin(np.maximum(log_up, log_dn)))
            last = BettingResult(*_expand(grid[k], grid[k], step, bounds, span), True)
        out.append(last)
    return out

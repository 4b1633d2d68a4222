"""Censoring-curve estimation and the bivariate Brier score.

The score for a predicted joint event-free probability pi_i(t) has three
IPCW-weighted regions: the non-terminal event observed by t (weight
1/G(Y1-)), the terminal event observed first and by t (weight 1/G(Y2-)),
and both events beyond t (weight 1/G(t)); subjects matching no region
contribute zero.  With the censoring survival G known, its expectation is
the MSE of the predictor plus an irreducible term (1/n) sum S_i (1 - S_i).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import Dataset


class ZeroWeightError(ZeroDivisionError):
    """The censoring curve vanished at a point where a weight is needed."""


@dataclass(frozen=True)
class CensoringCurve:
    """Right-continuous product-limit estimate of G(t) = Pr(C > t)."""

    times: np.ndarray
    survival: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "survival", np.asarray(self.survival, dtype=float))

    def evaluate(self, t, left: bool = False):
        """G(t), or the left limit G(t-) when left=True."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        side = "left" if left else "right"
        idx = np.searchsorted(self.times, t_arr, side=side)
        padded = np.concatenate(([1.0], self.survival))
        out = padded[idx]
        return out if np.ndim(t) else float(out[0])


@dataclass(frozen=True)
class ExponentialCensoring:
    """Known exponential censoring survival, usable wherever a curve is."""

    rate: float

    def evaluate(self, t, left: bool = False):
        out = np.exp(-self.rate * np.atleast_1d(np.asarray(t, dtype=float)))
        return out if np.ndim(t) else float(out[0])


def reverse_km(dataset: Dataset) -> CensoringCurve:
    """Kaplan-Meier estimate of the censoring survival function.

    Censorings (delta2 = 0) at y2 are the events; observed terminal events
    are treated as censored for G and stay in the risk set at tied times.
    """
    if dataset.n == 0:
        raise ValueError("empty dataset")
    order = np.argsort(dataset.y2, kind="stable")
    times = dataset.y2[order]
    cens = 1.0 - dataset.delta2[order]

    uniq, start = np.unique(times, return_index=True)
    d = np.add.reduceat(cens, start)
    counts = np.diff(np.append(start, len(times)))
    at_risk = dataset.n - np.concatenate(([0], np.cumsum(counts)[:-1]))

    keep = d > 0
    if not np.any(keep):
        return CensoringCurve(times=np.empty(0), survival=np.empty(0))
    factors = 1.0 - d[keep] / at_risk[keep]
    return CensoringCurve(times=uniq[keep], survival=np.cumprod(factors))


def bbs(dataset: Dataset, predictions, censoring: CensoringCurve, t: float) -> float:
    """Bivariate Brier score at time t, averaged over subjects.

    `predictions` holds pi_i(t) per subject.  Raises ZeroWeightError if G is
    zero at a point where a subject needs a weight.
    """
    pi = np.asarray(predictions, dtype=float)
    if pi.shape != (dataset.n,):
        raise ValueError("predictions must hold one value per subject")
    y1, d1 = dataset.y1, dataset.delta1
    y2, d2 = dataset.y2, dataset.delta2

    region1 = (y1 <= t) & (d1 == 1) & (y1 <= y2)
    region2 = (y1 <= t) & (y2 <= t) & (d1 == 0) & (d2 == 1) & (y1 <= y2)
    region3 = (y1 > t) & (y2 > t)

    g1 = censoring.evaluate(y1, left=True)
    g2 = censoring.evaluate(y2, left=True)
    gt = censoring.evaluate(t)

    if np.any(g1[region1] <= 0) or np.any(g2[region2] <= 0) or (np.any(region3) and gt <= 0):
        raise ZeroWeightError(f"censoring curve is zero at a weight point for t={t}")

    total = np.zeros(dataset.n)
    total[region1] = pi[region1] ** 2 / g1[region1]
    total[region2] += pi[region2] ** 2 / g2[region2]
    total[region3] += (1.0 - pi[region3]) ** 2 / gt
    return float(np.mean(total))


@dataclass(frozen=True)
class BBSCurve:
    grid: np.ndarray
    values: np.ndarray
    integrated: float
    horizon: float


def integrated_bbs(
    dataset: Dataset,
    predict,
    censoring: CensoringCurve,
    horizon: float,
    n_points: int = 100,
    time_average: bool = True,
    grid=None,
) -> BBSCurve:
    """Trapezoidal time-average of the BBS over an even grid up to `horizon`.

    `predict(t)` must return the (n,) vector of pi_i(t).  The default grid
    starts at horizon / n_points to skip the degenerate all-ones point; an
    explicit increasing `grid` overrides it.  If G hits zero inside the
    grid, the horizon is truncated to the last usable point with a warning.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if grid is None:
        grid = np.linspace(horizon / n_points, horizon, n_points)
    else:
        grid = np.asarray(grid, dtype=float)
        if len(grid) == 0 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
            raise ValueError("grid must be increasing and positive")
    g_vals = censoring.evaluate(grid)
    usable = g_vals > 0
    if not np.all(usable):
        if not np.any(usable):
            raise ZeroWeightError("censoring curve is zero over the whole grid")
        last = np.flatnonzero(usable)[-1]
        warnings.warn(
            f"censoring curve hits zero before the horizon; truncating to t={grid[last]:g}",
            stacklevel=2,
        )
        grid = grid[: last + 1]
    values = np.array([bbs(dataset, np.asarray(predict(t), dtype=float), censoring, t) for t in grid])
    if len(grid) == 1:
        integrated = float(values[0])
    else:
        integrated = float(np.trapezoid(values, grid))
        if time_average:
            integrated /= grid[-1] - grid[0]
    return BBSCurve(grid=grid, values=values, integrated=integrated, horizon=float(grid[-1]))

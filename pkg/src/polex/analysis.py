"""Convergence-rate evidence: log-log slope fits, the smoothness-to-rate map,
and sample-complexity accounting for the two estimator constructions."""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from . import rng
from .errors import ConfigError

__all__ = [
    "SweepSeries",
    "SlopeFit",
    "fit_loglog",
    "rate_exponent",
    "complexity_report",
]


@dataclass(frozen=True)
class SweepSeries:
    """One error curve: (grid size, value, std error) triples plus a label."""

    points: tuple  # ((n, value, std_error), ...)
    label: str = ""

    def __post_init__(self):
        pts = tuple((int(n), float(v), float(s)) for n, v, s in self.points)
        ns = [p[0] for p in pts]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("grid sizes must be strictly increasing")
        if any(not math.isfinite(p[1]) for p in pts):
            raise ConfigError("series values must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def ns(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def std_errors(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])


@dataclass(frozen=True)
class SlopeFit:
    """OLS slope of ln(value) on ln(n) with a bootstrap confidence interval."""

    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    r_squared: float
    resamples: int

    def __post_init__(self):
        if self.resamples < 100:
            raise ConfigError("need at least 100 bootstrap resamples")
        if not (self.ci_low <= self.slope <= self.ci_high):
            raise ConfigError("confidence interval must contain the slope")

    def summary(self, label: str = "") -> str:
        return (f"{label} slope={self.slope:.4f} "
                f"ci=[{self.ci_low:.4f},{self.ci_high:.4f}] r2={self.r_squared:.4f}")


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm = x.mean()
    ym = y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    return slope, float(ym - slope * xm)


def fit_loglog(series: SweepSeries, resamples: int = 1000, seed: int = 0) -> SlopeFit:
    """Fit ln(value) ~ ln(n) by OLS; CI from resampling points with replacement.

    Bootstrapping is over sweep points because each point's within-n noise is
    already summarized by its standard error.  Resamples that collapse onto
    fewer than two distinct grid sizes cannot support a line and are redrawn.
    """
    if len(series.points) < 3:
        raise ConfigError("need at least 3 points for a slope fit")
    values = series.values
    if np.any(values <= 0.0):
        bad = series.ns[values <= 0.0].astype(int).tolist()
        raise ConfigError(f"nonpositive values at n={bad}: log fit undefined")
    x = np.log(series.ns)
    y = np.log(values)
    slope, intercept = _ols(x, y)
    fitted = intercept + slope * x
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    gen = rng.substream(seed, rng.BOOTSTRAP)
    k = len(x)
    slopes = np.empty(resamples)
    for r in range(resamples):
        for _ in range(1000):
            idx = gen.integers(0, k, size=k)
            if len(np.unique(x[idx])) >= 2:
                break
        else:
            raise ConfigError("bootstrap could not draw a non-degenerate resample")
        slopes[r] = _ols(x[idx], y[idx])[0]
    ci_low, ci_high = np.quantile(slopes, [0.025, 0.975])
    # The point estimate can sit outside the percentile interval in tiny,
    # noisy series; widen to keep the interval honest about the estimate.
    ci_low = min(float(ci_low), slope)
    ci_high = max(float(ci_high), slope)
    return SlopeFit(slope=slope, intercept=intercept, ci_low=ci_low, ci_high=ci_high,
                    r_squared=r_squared, resamples=resamples)


def rate_exponent(l: float) -> float:
    """Weak-convergence order as a function of coefficient Holder smoothness l:
    l/2 on (0,1), 1/(3-l) on (1,2), 1 on (2,3).  Integer breakpoints are
    excluded from the theory and rejected here."""
    if not (0.0 < l < 3.0) or l in (1.0, 2.0):
        raise ConfigError(f"smoothness l={l} outside (0,1)u(1,2)u(2,3)")
    if l < 1.0:
        return l / 2.0
    if l < 2.0:
        return 1.0 / (3.0 - l)
    return 1.0


def complexity_report(mode: str, m: int, n: int) -> tuple[int, int]:
    """(noise streams instantiated, Brownian paths) for one estimator evaluation.

    Counting is at stream granularity: one Brownian path = 1, one sampling-noise
    vector = 1.  Shared mode reuses a single noise vector per grid point across
    paths (m + n); naive mode regenerates them per path (m + m*n).  A
    per-increment count would scale differently; this mirrors the
    total-number-of-random-variables accounting used in the sample-complexity
    statements.
    """
    if m < 1 or n < 1:
        raise ConfigError("m and n must be >= 1")
    if mode == "shared":
        return m + n, m
    if mode == "naive":
        return m + m * n, m
    raise ConfigError(f"unknown mode {mode!r}")

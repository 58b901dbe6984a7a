# stats_helpers.py

import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel
from scipy import stats
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

N_PERMUTATIONS = 200


class MomentSummary(BaseModel):
    """Sample moments with Monte Carlo standard errors."""

    n: int
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    skewness: float
    excess_kurtosis: float
    kurtosis_se: float


def summarize(samples: Sequence[float]) -> MomentSummary:
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    n = x.size
    if n < 4:
        raise ValueError(f"need at least 4 finite samples, got {n}")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    centred = x - mean
    m4 = float(np.mean(centred ** 4))
    # Var of the sample variance ≈ (μ4 - σ⁴)/n
    var_se = math.sqrt(max(m4 - var * var, 0.0) / n)
    kurt_se = math.sqrt(24.0 * n * (n - 1) ** 2 / ((n - 3) * (n - 2) * (n + 3) * (n + 5)))
    return MomentSummary(
        n=n,
        mean=mean,
        mean_se=math.sqrt(var / n),
        variance=var,
        variance_se=var_se,
        skewness=float(stats.skew(x)),
        excess_kurtosis=float(stats.kurtosis(x)),
        kurtosis_se=kurt_se,
    )


def second_moment(samples: Sequence[float]) -> tuple:
    """E[X²] and its standard error."""
    sq = np.asarray(samples, dtype=float) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(sq.size))


class HypothesisOutcome(BaseModel):
    statistic: float
    pvalue: float
    threshold: float
    passed: bool


def ks_normal(samples: Sequence[float], sigma: float, alpha: float = 0.01) -> HypothesisOutcome:
    """One-sample KS against N(0, σ²)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d, p = stats.kstest(np.asarray(samples, dtype=float), "norm", args=(0.0, sigma))
    return HypothesisOutcome(statistic=float(d), pvalue=float(p), threshold=alpha, passed=bool(p > alpha))


def ks_two_sample(x: Sequence[float], y: Sequence[float], alpha: float = 0.01) -> HypothesisOutcome:
    d, p = stats.ks_2samp(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return HypothesisOutcome(statistic=float(d), pvalue=float(p), threshold=alpha, passed=bool(p > alpha))


def _as_2d(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def _energy_from_pooled(dist: np.ndarray, left: np.ndarray, right: np.ndarray) -> float:
    cross = dist[np.ix_(left, right)].mean()
    within_l = dist[np.ix_(left, left)].mean()
    within_r = dist[np.ix_(right, right)].mean()
    return float(2.0 * cross - within_l - within_r)


def energy_distance(x, y) -> float:
    """2E|X - Y| - E|X - X'| - E|Y - Y'| between two samples of vectors."""
    a, b = _as_2d(x), _as_2d(y)
    return float(2.0 * cdist(a, b).mean() - cdist(a, a).mean() - cdist(b, b).mean())


def energy_test(
    x, y, n_permutations: int = N_PERMUTATIONS, seed: int = 0, alpha: float = 0.01
) -> HypothesisOutcome:
    """Energy distance with a permutation p-value."""
    a, b = _as_2d(x), _as_2d(y)
    pooled = np.vstack([a, b])
    dist = cdist(pooled, pooled)
    n_a = len(a)
    idx = np.arange(len(pooled))
    observed = _energy_from_pooled(dist, idx[:n_a], idx[n_a:])
    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(n_permutations):
        perm = rng.permutation(idx)
        if _energy_from_pooled(dist, perm[:n_a], perm[n_a:]) >= observed:
            exceed += 1
    p = (1 + exceed) / (1 + n_permutations)
    return HypothesisOutcome(statistic=observed, pvalue=p, threshold=alpha, passed=bool(p > alpha))


class TrendFlag(BaseModel):
    values: List[float]
    inversions: int
    allowed_inversions: int
    passed: bool


def decreasing_trend(values: Sequence[float], allowed_inversions: int = 1) -> TrendFlag:
    """Weakly decreasing sequence, tolerating a number of upward steps."""
    v = [float(x) for x in values]
    inversions = sum(1 for lo, hi in zip(v[:-1], v[1:]) if hi > lo)
    return TrendFlag(
        values=v,
        inversions=inversions,
        allowed_inversions=allowed_inversions,
        passed=inversions <= allowed_inversions and (len(v) < 2 or v[-1] < v[0]),
    )


class RatioEstimate(BaseModel):
    estimate: float
    target: float
    ratio: float
    ratio_se: float
    tolerance: Optional[float] = None
    passed: Optional[bool] = None


def variance_ratio(samples: Sequence[float], target: float, tolerance: Optional[float] = None) -> RatioEstimate:
    s = summarize(samples)
    ratio = s.variance / target
    passed = None if tolerance is None else bool(abs(ratio - 1.0) <= tolerance)
    return RatioEstimate(
        estimate=s.variance,
        target=target,
        ratio=ratio,
        ratio_se=s.variance_se / target,
        tolerance=tolerance,
        passed=passed,
    )


def within_standard_errors(estimate: float, target: float, se: float, k: float = 3.0) -> bool:
    return abs(estimate - target) <= k * se

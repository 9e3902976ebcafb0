"""Interval estimates and goodness-of-fit tests."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats as _st

__all__ = ["z_value", "wilson_interval", "binomial_se", "ks_test_exponential"]


def z_value(confidence: float) -> float:
    """Two-sided normal quantile for ``confidence``."""
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    return float(_st.norm.ppf(0.5 + confidence / 2.0))


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("need n >= 1")
    if not 0 <= successes <= n:
        raise ValueError("successes must lie in [0, n]")
    z = z_value(confidence)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def ks_test_exponential(samples, rate: float) -> tuple[float, float]:
    """One-sample KS test against Exp(rate); asymptotic p-value.

    Non-finite samples (censored radii) must be removed by the caller.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite; drop censored values first")
    if not rate > 0:
        raise ValueError("rate must be positive")
    res = _st.kstest(x, _st.expon(scale=1.0 / rate).cdf, method="asymp")
    return float(res.statistic), float(res.pvalue)

"""Small statistics kernel: correlations, OLS, Welch t-test, one-way ANOVA.

p-values come from the regularized incomplete beta function, which gives the
exact Student-t and F tail probabilities.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import betainc


class UndefinedCorrelationError(ValueError):
    """Correlation requested for an input with zero variance."""


class Correlation(NamedTuple):
    pearson_r: float
    pearson_p: float
    spearman_rho: float
    spearman_p: float


class LinearFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


class WelchResult(NamedTuple):
    t: float
    df: float
    p_value: float


class AnovaResult(NamedTuple):
    f: float
    p_value: float
    df_between: int
    df_within: int


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t with ``df`` degrees of freedom."""
    if np.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def f_sf(f: float, dfn: float, dfd: float) -> float:
    """Upper tail probability of the F distribution."""
    if f <= 0:
        return 1.0
    if np.isinf(f):
        return 0.0
    return float(betainc(dfd / 2.0, dfn / 2.0, dfd / (dfd + dfn * f)))


def rankdata(a: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the average of their ranks."""
    a = np.asarray(a, dtype=float)
    n = len(a)
    order = np.argsort(a, kind="mergesort")
    sorted_a = a[order]
    # start index of each run of equal values
    starts = np.flatnonzero(np.r_[True, sorted_a[1:] != sorted_a[:-1]])
    ends = np.r_[starts[1:], n]
    run_rank = (starts + ends - 1) / 2.0 + 1.0
    ranks = np.empty(n, dtype=float)
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant input")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def correlation_p(r: float, n: int) -> float:
    """Two-sided p for H0: no correlation, via t = r sqrt((n-2)/(1-r^2))."""
    if abs(r) >= 1.0:
        return 0.0
    df = n - 2
    t = r * np.sqrt(df / (1.0 - r * r))
    return t_two_sided_p(t, df)


def correlate(x: Sequence[float], y: Sequence[float]) -> Correlation:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d sequences of equal length")
    n = len(x)
    if n < 3:
        raise ValueError("correlation needs at least 3 points")
    r = pearson_r(x, y)
    rho = pearson_r(rankdata(x), rankdata(y))
    return Correlation(r, correlation_p(r, n), rho, correlation_p(rho, n))


def ols(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    """Least-squares line ``y = slope * x + intercept``.

    R^2 is reported as 0 when ``y`` has no variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValueError("regression needs at least 2 points")
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise UndefinedCorrelationError("regressor has zero variance")
    dy = y - y.mean()
    slope = float(dx @ dy) / sxx
    intercept = float(y.mean() - slope * x.mean())
    syy = float(dy @ dy)
    if syy == 0.0:
        r2 = 0.0
    else:
        resid = dy - slope * dx
        r2 = float(np.clip(1.0 - float(resid @ resid) / syy, 0.0, 1.0))
    return LinearFit(slope, intercept, r2)


def welch_ttest(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """Two-sided Welch two-sample t-test of ``mean(b) - mean(a)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("Welch test needs at least 2 samples per group")
    va = a.var(ddof=1) / len(a)
    vb = b.var(ddof=1) / len(b)
    diff = b.mean() - a.mean()
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return WelchResult(0.0, float(len(a) + len(b) - 2), 1.0)
        return WelchResult(float(np.sign(diff) * np.inf), float(len(a) + len(b) - 2), 0.0)
    t = float(diff / np.sqrt(se2))
    df = float(se2**2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1)))
    return WelchResult(t, df, t_two_sided_p(t, df))


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    groups = [np.asarray(g, dtype=float) for g in groups if len(g) > 0]
    k = len(groups)
    n = sum(len(g) for g in groups)
    if k < 2:
        raise ValueError("ANOVA needs at least two non-empty groups")
    if n - k < 1:
        raise ValueError("ANOVA needs more observations than groups")
    grand = np.concatenate(groups).mean()
    ss_between = float(sum(len(g) * (g.mean() - grand) ** 2 for g in groups))
    ss_within = float(sum(((g - g.mean()) ** 2).sum() for g in groups))
    df_b, df_w = k - 1, n - k
    if ss_within == 0.0:
        if ss_between == 0.0:
            raise ValueError("ANOVA is undefined: all observations are identical")
        return AnovaResult(np.inf, 0.0, df_b, df_w)
    f = (ss_between / df_b) / (ss_within / df_w)
    return AnovaResult(float(f), f_sf(f, df_b, df_w), df_b, df_w)

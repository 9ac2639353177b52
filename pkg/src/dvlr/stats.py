"""Welch's two-sample t-test, two-tailed, on plain Python floats.

The t-distribution tail comes from the regularized incomplete beta function,
evaluated with the modified Lentz continued fraction.
"""

from __future__ import annotations

import math
from typing import Sequence

from .errors import DataError

_MAX_ITER = 500
_EPS = 1e-16
_TINY = 1e-300


def _beta_cf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not (a > 0 and b > 0):
        raise ValueError(f"betainc needs positive shape parameters, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"betainc needs 0 <= x <= 1, got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the continued fraction converges fast only on this side
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def t_two_tailed_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return min(1.0, max(0.0, betainc_regularized(df / 2.0, 0.5, df / (df + t * t))))


def _mean_var(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    m = math.fsum(xs) / n
    return m, math.fsum((x - m) ** 2 for x in xs) / (n - 1)


def welch_statistic(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch t statistic and Welch-Satterthwaite degrees of freedom.

    Returns ``(nan, nan)`` when both samples have zero variance.
    """
    a, b = [float(x) for x in a], [float(x) for x in b]
    if len(a) < 2 or len(b) < 2:
        raise DataError(f"welch_t_test needs at least 2 values per sample, got {len(a)} and {len(b)}")
    ma, va = _mean_var(a)
    mb, vb = _mean_var(b)
    sa, sb = va / len(a), vb / len(b)
    se2 = sa + sb
    if se2 == 0.0:
        return math.nan, math.nan
    t = (ma - mb) / math.sqrt(se2)
    # scaled so squaring tiny variances cannot underflow to 0/0
    top = max(sa, sb)
    ra, rb = sa / top, sb / top
    df = (ra + rb) ** 2 / (ra * ra / (len(a) - 1) + rb * rb / (len(b) - 1))
    return t, df


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-tailed p-value of Welch's unequal-variance t-test.

    Conventions when both samples are constant: equal means give p = 1,
    different means give p = 0.
    """
    t, df = welch_statistic(a, b)
    if math.isnan(t):
        return 1.0 if math.fsum(a) / len(a) == math.fsum(b) / len(b) else 0.0
    return t_two_tailed_p(t, df)

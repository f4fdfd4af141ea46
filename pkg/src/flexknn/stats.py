"""Student-t confidence intervals for mean accuracy."""

import math

import numpy as np
from scipy.special import betaincinv

from .errors import InvalidParameter, TooFew


def t_quantile(upper_tail, df):
    """``t`` with ``P(T > t) = upper_tail`` for Student's t with ``df`` degrees of freedom.

    Uses ``P(|T| > t) = I_x(df/2, 1/2)`` with ``x = df / (df + t^2)`` and
    inverts the regularised incomplete beta function.
    """
    if not 0 < upper_tail < 1 or not df > 0:
        raise InvalidParameter("need 0 < upper_tail < 1 and df > 0")
    if upper_tail == 0.5:
        return 0.0
    q = min(upper_tail, 1.0 - upper_tail)
    x = float(betaincinv(df / 2.0, 0.5, 2.0 * q))
    t = math.sqrt(df * (1.0 - x) / x)
    return t if upper_tail < 0.5 else -t


def mean_ci(values, alpha=0.05):
    """``(mean, lo, hi)`` for ``mean -/+ t_{alpha/2}(n-1) s / sqrt(n)``, ``s`` with Bessel's correction."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise TooFew("need at least 2 values")
    if not 0 < alpha < 1:
        raise InvalidParameter("alpha must be in (0, 1)")
    m = float(x.mean())
    s = float(x.std(ddof=1))
    h = t_quantile(alpha / 2.0, x.size - 1) * s / math.sqrt(x.size)
    return m, m - h, m + h

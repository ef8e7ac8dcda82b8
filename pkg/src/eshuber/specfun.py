"""Lower and upper incomplete gamma functions.

Series expansion below ``x < s + 1`` and a modified-Lentz continued fraction
above it. Only real ``s > 0`` and ``x >= 0`` are supported.
"""

import math

from .exceptions import InvalidParamsError

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 10_000


def _check(s, x):
    if not (s > 0) or not math.isfinite(s):
        raise InvalidParamsError(f"shape must be positive and finite, got s={s!r}")
    if not (x >= 0):
        raise InvalidParamsError(f"cutoff must be nonnegative, got x={x!r}")


def _lower_series(s, x):
    # gamma(s, x) = x^s e^{-x} sum_n x^n / (s (s+1) ... (s+n))
    term = 1.0 / s
    total = term
    a = s
    for _ in range(_MAX_TERMS):
        a += 1.0
        term *= x / a
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(s * math.log(x) - x)


def _upper_cf(s, x):
    # Gamma(s, x) = e^{-x} x^s / (x + 1 - s - 1(1-s)/(x + 3 - s - ...))
    b = x + 1.0 - s
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(s * math.log(x) - x)


def lower_incomplete_gamma(s, x):
    """Lower incomplete gamma ``int_0^x t^(s-1) e^(-t) dt``.

    Parameters
    ----------
    s : float
        Shape, strictly positive.
    x : float
        Upper limit, nonnegative. ``math.inf`` returns ``Gamma(s)``.

    Returns
    -------
    float
    """
    _check(s, x)
    if x == 0:
        return 0.0
    if math.isinf(x):
        return math.gamma(s)
    if x < s + 1.0:
        return _lower_series(s, x)
    return math.gamma(s) - _upper_cf(s, x)


def upper_incomplete_gamma(s, x):
    """Upper incomplete gamma ``int_x^inf t^(s-1) e^(-t) dt``."""
    _check(s, x)
    if x == 0:
        return math.gamma(s)
    if math.isinf(x):
        return 0.0
    if x < s + 1.0:
        return math.gamma(s) - _lower_series(s, x)
    return _upper_cf(s, x)

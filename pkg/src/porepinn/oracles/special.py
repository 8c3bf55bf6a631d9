"""Complementary error function and its scaled form, vectorized over numpy arrays.

erfc is evaluated through erfcx(x) = exp(x^2) erfc(x): a Maclaurin series for
erf on |x| < 2 and a continued fraction beyond, both truncated at fixed depth.
"""

from __future__ import annotations

import math

import numpy as np

_SQRT_PI = math.sqrt(math.pi)
_SERIES_CUT = 2.0
_SERIES_TERMS = 60
_CF_DEPTH = 120

# 2/sqrt(pi) * (-1)^n / (n! (2n+1))
_ERF_COEF = np.array(
    [2 / _SQRT_PI * (-1) ** n / (math.factorial(n) * (2 * n + 1)) for n in range(_SERIES_TERMS)]
)


def _erf_series(x: np.ndarray) -> np.ndarray:
    x2 = x * x
    acc = np.zeros_like(x)
    for c in _ERF_COEF[::-1]:
        acc = acc * x2 + c
    return x * acc


def _erfcx_cf(x: np.ndarray) -> np.ndarray:
    # erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), x > 0
    tail = np.zeros_like(x)
    for k in range(_CF_DEPTH, 0, -1):
        tail = (k / 2) / (x + tail)
    return 1.0 / (_SQRT_PI * (x + tail))


def _erfcx_pos(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    small = x < _SERIES_CUT
    xs = x[small]
    out[small] = np.exp(xs * xs) * (1.0 - _erf_series(xs))
    big = ~small
    out[big] = _erfcx_cf(x[big])
    return out


def erfcx(x):
    """Scaled complementary error function exp(x^2) * erfc(x)."""
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = _erfcx_pos(x[pos])
    neg = ~pos
    xn = x[neg]
    with np.errstate(over="ignore"):
        out[neg] = 2.0 * np.exp(xn * xn) - _erfcx_pos(-xn)
    return out[0] if scalar else out


def erfc(x):
    """Complementary error function, absolute error below 1e-12."""
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    ax = np.abs(x)
    small = ax < _SERIES_CUT
    out[small] = 1.0 - _erf_series(x[small])
    big = ~small
    xb = x[big]
    with np.errstate(under="ignore"):
        tail = np.exp(-xb * xb) * _erfcx_cf(np.abs(xb))
    out[big] = np.where(xb > 0, tail, 2.0 - tail)
    return out[0] if scalar else out


def exp_erfc(a, z):
    """exp(a) * erfc(z) without intermediate overflow or 0*inf."""
    a = np.asarray(a, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    a, z = np.broadcast_arrays(a, z)
    out = np.empty(a.shape)
    pos = z >= 0
    with np.errstate(over="ignore", under="ignore"):
        out[pos] = np.exp(a[pos] - z[pos] ** 2) * erfcx(z[pos])
        out[~pos] = np.exp(a[~pos]) * erfc(z[~pos])
    return out

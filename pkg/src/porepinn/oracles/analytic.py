"""Closed-form concentration solutions for constant-velocity transport."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..net import ConfigError
from .special import erfc, exp_erfc

TERM_CAP = 200
TRUNCATION = 1e-12
_CHUNK = 50


class RootFindingError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Series1DParams:
    L: float
    u_x: float
    D_x: float
    C0: float = 1.0
    n_terms: int = TERM_CAP
    root_tolerance: float = 1e-10

    def __post_init__(self):
        if not (self.L > 0 and self.D_x > 0 and self.n_terms >= 1):
            raise ConfigError("Series1DParams needs L > 0, D_x > 0, n_terms >= 1")

    @property
    def h(self) -> float:
        return self.u_x * self.L / (2 * self.D_x)


def transcendental_roots(h: float, n: int, tol: float = 1e-10) -> np.ndarray:
    """First n positive roots of beta*cot(beta) + h = 0, one per ((i-1)pi, i*pi).

    Each root satisfies |beta cot beta + h| < tol * max(1, beta).
    """
    if not h > 0:
        raise ValueError("h must be positive")
    return _roots(float(h), int(n), float(tol)).copy()


@lru_cache(maxsize=32)
def _roots(h: float, n: int, tol: float) -> np.ndarray:
    i = np.arange(1, n + 1, dtype=float)
    delta = 1e-12
    lo = (i - 1) * np.pi + delta
    hi = i * np.pi - delta
    f = lambda b: b / np.tan(b) + h  # noqa: E731
    if np.any(f(lo) <= 0) or np.any(f(hi) >= 0):
        raise RootFindingError("bracket does not enclose a sign change")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pos = f(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * hi):
            break
    beta = 0.5 * (lo + hi)
    # polish with a Newton step on beta*cos + h*sin, which is smooth at the root
    g = beta * np.cos(beta) + h * np.sin(beta)
    dg = np.cos(beta) - beta * np.sin(beta) + h * np.cos(beta)
    polished = beta - g / dg
    inside = (polished > (i - 1) * np.pi) & (polished < i * np.pi)
    beta = np.where(inside & (np.abs(f(polished)) < np.abs(f(beta))), polished, beta)
    # an ulp in beta moves the residual by ~beta ulps, so the tolerance scales with beta
    if np.any(np.abs(f(beta)) >= tol * np.maximum(1.0, beta)):
        raise RootFindingError(f"root residual above {tol}")
    return beta


def analytic_1d_series(x, t, p: Series1DParams):
    """Finite column, C = C0 at x = 0, zero gradient at x = L, C = 0 initially."""
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    h = p.h
    beta = _roots(h, p.n_terms, p.root_tolerance)
    L, u, D = p.L, p.u_x, p.D_x
    xf, tf = x.ravel(), t.ravel()
    acc = np.zeros(xf.shape)
    # exp(x u / 2D - u^2 t / 4D) folded into each term to keep magnitudes bounded
    pref = xf * u / (2 * D) - u * u * tf / (4 * D)
    for s in range(0, p.n_terms, _CHUNK):
        b = beta[s : s + _CHUNK]
        expo = pref[:, None] - np.outer(tf, b * b) * D / L**2
        term = (b * np.sin(np.outer(xf, b) / L) / (b * b + h * h + h)) * np.exp(expo)
        acc += term.sum(axis=1)
        if np.max(np.abs(term[:, -1])) < TRUNCATION:
            break
    return (p.C0 * (1 - 2 * acc)).reshape(x.shape)


def analytic_1d_approx(x, t, p: Series1DParams):
    """Four-term erfc approximation of the finite-column solution (t > 0)."""
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    L, u, D = p.L, p.u_x, p.D_x
    s = 2 * np.sqrt(D * t)
    a = (0.5 * erfc((x - u * t) / s)
         + 0.5 * exp_erfc(u * x / D, (x + u * t) / s)
         + 0.5 * (2 + u * (2 * L - x) / D + u * u * t / D) * exp_erfc(u * L / D, (2 * L - x + u * t) / s)
         - np.sqrt(u * u * t / (np.pi * D)) * np.exp(u * L / D - (2 * L - x + u * t) ** 2 / (4 * D * t)))
    return p.C0 * a


@dataclass(frozen=True)
class Analytic2DParams:
    W: float
    y1: float
    y2: float
    u_x: float
    D_x: float
    D_y: float
    C0: float = 1.0
    n_terms: int = TERM_CAP

    def __post_init__(self):
        if not 0 <= self.y1 <= self.y2 <= self.W:
            raise ConfigError("need 0 <= y1 <= y2 <= W")
        if not (self.D_x > 0 and self.D_y >= 0 and self.n_terms >= 1):
            raise ConfigError("need D_x > 0, D_y >= 0, n_terms >= 1")


def analytic_2d(x, y, t, p: Analytic2DParams):
    """Semi-infinite strip 0 <= y <= W, injection C0 on x = 0 for y1 <= y <= y2.

    Zero-gradient walls at y = 0, W. Points on x = 0 return the boundary value.
    """
    x, y, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, t)))
    xf, yf, tf = x.ravel(), y.ravel(), t.ravel()
    u, Dx, Dy, W = p.u_x, p.D_x, p.D_y, p.W
    out = np.zeros(xf.shape)
    inner = xf > 0
    xi, yi, ti = xf[inner], yf[inner], tf[inner]
    s = 2 * np.sqrt(Dx * ti)
    acc = np.zeros(xi.shape)
    n_all = np.arange(p.n_terms, dtype=float)
    for start in range(0, p.n_terms, _CHUNK):
        n = n_all[start : start + _CHUNK]
        eta = n * np.pi / W
        zeta = np.sqrt(u * u + 4 * eta * eta * Dx * Dy)
        Ln = np.where(n == 0, 0.5, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            Pn = np.where(n == 0, (p.y2 - p.y1) / W,
                          (np.sin(eta * p.y2) - np.sin(eta * p.y1)) / (n * np.pi))
        X, Z, Tt = xi[:, None], zeta[None, :], ti[:, None]
        bracket = (exp_erfc(X * (u - Z) / (2 * Dx), (X - Z * Tt) / s[:, None])
                   + exp_erfc(X * (u + Z) / (2 * Dx), (X + Z * Tt) / s[:, None]))
        weight = Ln * Pn
        term = weight * np.cos(np.outer(yi, eta)) * bracket
        acc += term.sum(axis=1)
        tail = np.abs(weight[None, :] * bracket)
        if start > 0 and np.max(tail, initial=0.0) < TRUNCATION:
            break
    out[inner] = p.C0 * acc
    on_face = ~inner
    eps = 1e-9 * W
    yb = yf[on_face]
    out[on_face] = np.where((yb >= p.y1 - eps) & (yb <= p.y2 + eps), p.C0, 0.0)
    return out.reshape(x.shape)

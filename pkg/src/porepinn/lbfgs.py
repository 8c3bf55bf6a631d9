"""L-BFGS (two-loop recursion) with a strong-Wolfe line search.

Operates on flat float64 vectors; ``objective(theta) -> (f, grad)``.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .net import TrainingDivergence

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass
class LBFGSOptions:
    memory: int = 10
    max_iters: int = 20000
    tolerance: float = 1e-6  # stop when loss < tolerance
    grad_tolerance: float = 1e-9
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 25
    max_step: float = 1e3  # bracket growth cap (in units of the first trial step)


@dataclass
class OptimResult:
    theta: np.ndarray
    loss: float
    iterations: int
    converged: bool
    reason: str
    history: list[float] = field(default_factory=list)  # best-so-far loss per iteration
    evaluations: int = 0
    elapsed: float = 0.0


class LineSearchFailure(RuntimeError):
    pass


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating (a, fa, ga), (b, fb, gb), or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    x = b - (b - a) * (gb + d2 - d1) / denom
    return x if math.isfinite(x) else None


def strong_wolfe(phi, f0, g0, step, c1=1e-4, c2=0.9, max_evals=25, max_step=1e3):
    """Return (step, f, grad_vec, dphi, n_evals) satisfying the strong Wolfe conditions.

    ``phi(step) -> (f, dphi, grad_vec)``; ``g0`` is the directional derivative at 0 (< 0).
    """
    if g0 >= 0:
        raise LineSearchFailure("not a descent direction")
    a_prev, f_prev, g_prev = 0.0, f0, g0
    a = step
    a_max = step * max_step
    n = 0
    best = None
    while n < max_evals:
        f, g, grad = phi(a)
        n += 1
        if not math.isfinite(f):
            # shrink back toward the last finite point
            a = 0.5 * (a_prev + a)
            continue
        if best is None or f < best[1]:
            best = (a, f, grad, g)
        if f > f0 + c1 * a * g0 or (n > 1 and f >= f_prev):
            return _zoom(phi, f0, g0, a_prev, f_prev, g_prev, a, f, g, c1, c2, max_evals - n, n, best)
        if abs(g) <= -c2 * g0:
            return a, f, grad, g, n
        if g >= 0:
            return _zoom(phi, f0, g0, a, f, g, a_prev, f_prev, g_prev, c1, c2, max_evals - n, n, best)
        a_new = _cubic_min(a_prev, f_prev, g_prev, a, f, g)
        lo, hi = a + 0.01 * (a - a_prev), min(a_max, 10 * a)
        if a_new is None or not (lo <= a_new <= hi):
            a_new = min(a_max, 2 * a)
        a_prev, f_prev, g_prev = a, f, g
        a = a_new
    return _fallback(best, f0, c1, g0, n)


def _zoom(phi, f0, g0, a_lo, f_lo, g_lo, a_hi, f_hi, g_hi, c1, c2, budget, n, best):
    for _ in range(max(budget, 0)):
        a = _cubic_min(a_lo, f_lo, g_lo, a_hi, f_hi, g_hi)
        lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
        width = hi - lo
        if a is None or not (lo + 0.1 * width <= a <= hi - 0.1 * width):
            a = 0.5 * (a_lo + a_hi)
        f, g, grad = phi(a)
        n += 1
        if math.isfinite(f) and f < best[1]:
            best = (a, f, grad, g)
        if not math.isfinite(f) or f > f0 + c1 * a * g0 or f >= f_lo:
            a_hi, f_hi, g_hi = a, f if math.isfinite(f) else np.inf, g if math.isfinite(f) else 0.0
            if not math.isfinite(f):
                # no usable interpolation data on this side
                g_hi = g_lo
        else:
            if abs(g) <= -c2 * g0:
                return a, f, grad, g, n
            if g * (a_hi - a_lo) >= 0:
                a_hi, f_hi, g_hi = a_lo, f_lo, g_lo
            a_lo, f_lo, g_lo = a, f, g
        if abs(a_hi - a_lo) <= 1e-16 * max(1.0, abs(a_lo)):
            break
    return _fallback(best, f0, c1, g0, n)


def _fallback(best, f0, c1, g0, n):
    # accept any point with sufficient decrease rather than failing outright
    if best is not None and best[1] < f0:
        a, f, grad, g = best
        return a, f, grad, g, n
    raise LineSearchFailure("no decrease found")


def lbfgs_minimize(objective: Objective, theta0, opts: LBFGSOptions | None = None,
                   callback: Callable[[int, float, np.ndarray], None] | None = None) -> OptimResult:
    """Minimize ``objective`` from ``theta0``.

    Stops when the loss drops below ``opts.tolerance``, the gradient norm below
    ``opts.grad_tolerance``, or after ``opts.max_iters`` iterations. A line-search
    failure ends the run with ``converged=False``. Returns the best parameters seen.
    """
    opts = opts or LBFGSOptions()
    t0 = time.perf_counter()
    x = np.array(theta0, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial parameters are not finite")
    f, g = objective(x)
    evals = 1
    if not math.isfinite(f):
        raise TrainingDivergence("objective", f)
    s_hist: deque[np.ndarray] = deque(maxlen=max(opts.memory, 1))
    y_hist: deque[np.ndarray] = deque(maxlen=max(opts.memory, 1))
    rho_hist: deque[float] = deque(maxlen=max(opts.memory, 1))
    history: list[float] = []
    best_x, best_f = x.copy(), f

    def done(it, reason, converged):
        return OptimResult(best_x, best_f, it, converged, reason, history, evals, time.perf_counter() - t0)

    if f < opts.tolerance:
        return done(0, "loss below tolerance", True)
    if opts.max_iters <= 0:
        return done(0, "max_iters reached", False)

    for it in range(1, opts.max_iters + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm < opts.grad_tolerance:
            return done(it - 1, "gradient below tolerance", True)

        # two-loop recursion
        q = -g
        alphas = []
        if opts.memory > 0:
            for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
                a = rho * (s @ q)
                alphas.append(a)
                q = q - a * y
        if s_hist and opts.memory > 0:
            s, y = s_hist[-1], y_hist[-1]
            q = q * ((s @ y) / (y @ y))
            first = 1.0
        else:
            first = min(1.0, 1.0 / max(gnorm, 1e-300))
        if opts.memory > 0:
            for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
                b = rho * (y @ q)
                q = q + (a - b) * s
        d = q
        dg = float(g @ d)
        if not dg < 0:
            # curvature information unusable; restart from steepest descent
            s_hist.clear(); y_hist.clear(); rho_hist.clear()
            d = -g
            dg = -gnorm * gnorm
            first = min(1.0, 1.0 / max(gnorm, 1e-300))

        def phi(a, x=x, d=d):
            nonlocal evals
            fa, ga = objective(x + a * d)
            evals += 1
            if math.isnan(fa):
                raise TrainingDivergence("objective", fa)
            return fa, float(ga @ d) if math.isfinite(fa) else 0.0, ga

        try:
            step, f_new, g_new, _, _ = strong_wolfe(phi, f, dg, first, opts.c1, opts.c2,
                                                    opts.max_line_search, opts.max_step)
        except LineSearchFailure as exc:
            if s_hist:
                # retry once along steepest descent with fresh memory
                s_hist.clear(); y_hist.clear(); rho_hist.clear()
                d = -g
                try:
                    step, f_new, g_new, _, _ = strong_wolfe(
                        lambda a: phi(a, x, d), f, -gnorm * gnorm, min(1.0, 1.0 / gnorm),
                        opts.c1, opts.c2, opts.max_line_search, opts.max_step)
                except LineSearchFailure as exc2:
                    history.append(best_f)
                    return done(it, f"line search failed: {exc2}", False)
            else:
                history.append(best_f)
                return done(it, f"line search failed: {exc}", False)

        x_new = x + step * d
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(y @ y) and opts.memory > 0:
            s_hist.append(s); y_hist.append(y); rho_hist.append(1.0 / sy)
        x, f, g = x_new, f_new, g_new
        if f < best_f:
            best_x, best_f = x.copy(), f
        history.append(best_f)
        if callback is not None:
            callback(it, f, x)
        if best_f < opts.tolerance:
            return done(it, "loss below tolerance", True)
    return done(opts.max_iters, "max_iters reached", False)

"""Lower incomplete gamma function.

Series expansion below ``x = s + 1``; Lentz continued fraction for the
upper tail above it. Both branches are vectorised over ``x``.
"""

from __future__ import annotations

import math

import numpy as np

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 1000


def _series(s: float, x: np.ndarray) -> np.ndarray:
    # gamma(s, x) = x^s e^-x sum_k x^k / (s (s+1) ... (s+k))
    term = np.full_like(x, 1.0 / s)
    total = term.copy()
    active = np.ones(x.shape, dtype=bool)
    ap = s
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term = np.where(active, term * x / ap, term)
        total = np.where(active, total + term, total)
        active &= np.abs(term) > np.abs(total) * _EPS
        if not active.any():
            break
    return total * np.exp(-x + s * np.log(x))


def _upper_cf(s: float, x: np.ndarray) -> np.ndarray:
    # Gamma(s, x) via the modified Lentz algorithm.
    b = x + 1.0 - s
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, _MAX_TERMS):
        an = -i * (i - s)
        b = b + 2.0
        d_new = an * d + b
        d_new = np.where(np.abs(d_new) < _TINY, _TINY, d_new)
        c_new = b + an / c
        c_new = np.where(np.abs(c_new) < _TINY, _TINY, c_new)
        d_new = 1.0 / d_new
        delta = d_new * c_new
        d = np.where(active, d_new, d)
        c = np.where(active, c_new, c)
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > _EPS
        if not active.any():
            break
    return np.exp(-x + s * np.log(x)) * h


def lower_inc_gamma(s: float, x):
    """Unnormalised lower incomplete gamma, the integral of t^(s-1) e^-t over [0, x].

    ``x`` may be a scalar or array; ``x = inf`` returns the complete gamma
    function of ``s``.
    """
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(np.isnan(xa)) or np.any(xa < 0):
        raise ValueError("x must be nonnegative")
    out = np.zeros_like(xa)
    g = math.gamma(s)
    inf = np.isinf(xa)
    out[inf] = g
    lo = (xa > 0) & (xa < s + 1.0)
    hi = (xa >= s + 1.0) & ~inf
    if lo.any():
        out[lo] = _series(s, xa[lo])
    if hi.any():
        out[hi] = g - _upper_cf(s, xa[hi])
    return float(out[0]) if scalar else out

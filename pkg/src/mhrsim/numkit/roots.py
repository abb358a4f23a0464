"""Bracketed scalar root finding."""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.optimize import brentq


class BracketError(ValueError):
    """The function does not change sign over the supplied bracket."""


def brent_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Root of ``f`` in ``[lo, hi]`` by Brent's method.

    ``f(lo)`` and ``f(hi)`` must have opposite signs (or one of them be zero).
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo:.3g}, {fhi:.3g}")
    return float(brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=max_iter))

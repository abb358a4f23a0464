"""Brute-force reference implementations used only by the tests."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar


def full_match_bruteforce(ps, Z) -> float:
    """Exhaustive minimum over all partitions into strata with both groups present.

    Each stratum costs the sum of |ps_t - ps_c| over its treated-control
    pairs. Minimises over set partitions by recursion on the subset lattice
    (every partition is visited through its block containing the lowest
    remaining subject), so nothing is assumed about the optimum's shape.
    """
    ps = np.asarray(ps, dtype=float)
    Z = np.asarray(Z).astype(bool)
    n = ps.size
    full = (1 << n) - 1
    cost = [math.inf] * (1 << n)
    for mask in range(1, 1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        t = [ps[i] for i in members if Z[i]]
        c = [ps[i] for i in members if not Z[i]]
        if t and c:
            cost[mask] = sum(abs(a - b) for a in t for b in c)
    best = [math.inf] * (1 << n)
    best[0] = 0.0
    for mask in range(1, 1 << n):
        low = mask & -mask
        rest = mask ^ low
        sub = rest
        while True:
            block = sub | low
            val = cost[block] + best[mask ^ block]
            if val < best[mask]:
                best[mask] = val
            if sub == 0:
                break
            sub = (sub - 1) & rest
    return best[full]


def cox_loglik_loop(beta, time, event, x, weights=None, ties="breslow") -> float:
    """Weighted log partial likelihood, scalar covariate, written as plain loops."""
    n = len(time)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    ll = 0.0
    for t in sorted({time[i] for i in range(n) if event[i]}):
        deaths = [i for i in range(n) if event[i] and time[i] == t]
        risk = [j for j in range(n) if time[j] >= t]
        s_risk = sum(w[j] * math.exp(beta * x[j]) for j in risk)
        s_dead = sum(w[i] * math.exp(beta * x[i]) for i in deaths)
        wd = sum(w[i] for i in deaths)
        d = len(deaths)
        ll += sum(w[i] * beta * x[i] for i in deaths)
        for r in range(d):
            frac = r / d if ties == "efron" else 0.0
            ll -= wd / d * math.log(s_risk - frac * s_dead)
    return ll


def cox_fit_loop(time, event, x, weights=None, ties="breslow") -> float:
    res = minimize_scalar(
        lambda b: -cox_loglik_loop(b, time, event, x, weights, ties),
        bounds=(-10, 10), method="bounded", options={"xatol": 1e-10},
    )
    return float(res.x)

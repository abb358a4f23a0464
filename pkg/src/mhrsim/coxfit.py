"""Case-weighted Cox proportional hazards regression.

Partial-likelihood fitting with Efron or Breslow handling of tied event
times, naive (inverse information) and robust sandwich standard errors,
Wald intervals, and the rolling hazard-ratio curves used for the
treatment-effect-over-follow-up figures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Z_975 = 1.959963984540054


class CoxError(ValueError):
    pass


@dataclass(frozen=True)
class CoxEstimate:
    """Result of a weighted Cox fit.

    ``log_hr``, ``naive_se`` and ``robust_se`` are arrays with one entry per
    covariate column; for a single-column fit use ``est.log_hr[0]`` or the
    scalar conveniences ``hr`` and ``se``.
    """

    log_hr: np.ndarray
    naive_se: np.ndarray
    robust_se: np.ndarray
    converged: bool
    n_events: int
    ties: str
    iterations: int = 0
    loglik: float = float("nan")
    cov_robust: np.ndarray = field(default=None, repr=False)

    @property
    def hr(self) -> float:
        return float(np.exp(self.log_hr[0]))

    @property
    def se(self) -> float:
        return float(self.robust_se[0])


@dataclass
class _RiskSetData:
    """Sorted data and per-event-time grouping, independent of beta."""

    X: np.ndarray  # n x q, sorted by time ascending
    w: np.ndarray
    d: np.ndarray  # event indicator, sorted
    time: np.ndarray
    order: np.ndarray
    risk_start: np.ndarray  # for each event time k, first sorted index with T >= t_k
    ev_idx: np.ndarray  # sorted indices of events, grouped by event time
    ev_group: np.ndarray  # event-time index k for each entry of ev_idx
    ev_rank: np.ndarray  # position l of the event within its tie group
    ev_mult: np.ndarray  # tie-group size m_k for each event
    n_groups: int
    group_of_subject: np.ndarray  # for each sorted subject: number of event times <= T_i

    @property
    def has_ties(self) -> bool:
        return self.n_groups < self.ev_idx.size


def _prepare(time, event, X, weights) -> _RiskSetData:
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(bool)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = time.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if X.shape[0] != n or event.shape != (n,) or w.shape != (n,):
        raise CoxError("time, event, covariates and weights must have equal length")
    if n < 2:
        raise CoxError("need at least two subjects")
    if not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise CoxError("weights must be finite and positive")
    if not event.any():
        raise CoxError("no events")

    # Events before censorings at equal times, so censored-at-t subjects stay at risk.
    order = np.lexsort((~event, time))
    t, d, Xs, ws = time[order], event[order], X[order], w[order]

    ev_idx = np.flatnonzero(d)
    ev_times = t[ev_idx]
    # ev_times is already sorted: group boundaries are where the value changes
    new_group = np.concatenate(([True], ev_times[1:] != ev_times[:-1]))
    first = np.flatnonzero(new_group)
    uniq = ev_times[first]
    counts = np.diff(np.append(first, ev_times.size))
    ev_group = np.cumsum(new_group) - 1
    ev_rank = np.arange(ev_idx.size) - first[ev_group]
    ev_mult = counts[ev_group]
    risk_start = np.searchsorted(t, uniq, side="left")
    group_of_subject = np.searchsorted(uniq, t, side="right")
    return _RiskSetData(
        Xs, ws, d.astype(float), t, order, risk_start, ev_idx, ev_group,
        ev_rank, ev_mult, uniq.size, group_of_subject,
    )


def _rev_cumsum(a: np.ndarray) -> np.ndarray:
    return np.cumsum(a[::-1], axis=0)[::-1]


def _group_sum(rs: _RiskSetData, values: np.ndarray) -> np.ndarray:
    # sum over the tied events of each event time
    if not rs.has_ties:
        return values
    out = np.zeros((rs.n_groups,) + values.shape[1:])
    np.add.at(out, rs.ev_group, values)
    return out


def _terms(beta: np.ndarray, rs: _RiskSetData, ties: str, need_hessian: bool = True):
    """Log partial likelihood, score and Hessian at ``beta``.

    Also returns the per-(event, tie-position) pieces needed for score
    residuals.
    """
    X, w = rs.X, rs.w
    q = X.shape[1]
    eta = X @ beta
    # shift for stability; cancels in every ratio
    shift = eta.max()
    r = np.exp(eta - shift)
    wr = w * r
    S0 = _rev_cumsum(wr)[rs.risk_start]
    S1 = _rev_cumsum(wr[:, None] * X)[rs.risk_start]

    e = rs.ev_idx
    g = rs.ev_group
    wr_e = wr[e]
    Xe = X[e]
    if ties not in ("efron", "breslow"):
        raise CoxError(f"unknown ties method {ties!r}")

    if rs.has_ties:
        E0 = _group_sum(rs, wr_e)
        E1 = _group_sum(rs, wr_e[:, None] * Xe)
        meanwt = _group_sum(rs, w[e]) / np.bincount(g, minlength=rs.n_groups)
        mw = meanwt[g]
        frac = rs.ev_rank / rs.ev_mult if ties == "efron" else np.zeros(e.size)
        # One row per (event time k, tie position l), indexed like ev_idx.
        den = S0[g] - frac * E0[g]
        num1 = S1[g] - frac[:, None] * E1[g]
    else:
        # event k is the only event at its time: Efron == Breslow
        mw = w[e]
        frac = np.zeros(e.size)
        den = S0
        num1 = S1
    xbar = num1 / den[:, None]

    loglik = float(np.sum(w[e] * eta[e]) - np.sum(mw * (np.log(den) + shift)))
    score = (w[e] @ Xe) - (mw @ xbar)

    hess = None
    if need_hessian:
        S2 = _rev_cumsum(wr[:, None, None] * X[:, :, None] * X[:, None, :])[rs.risk_start]
        if rs.has_ties:
            E2 = _group_sum(rs, wr_e[:, None, None] * Xe[:, :, None] * Xe[:, None, :])
            num2 = S2[g] - frac[:, None, None] * E2[g]
        else:
            num2 = S2
        v = num2 / den[:, None, None] - xbar[:, :, None] * xbar[:, None, :]
        hess = -(mw[:, None, None] * v).sum(axis=0)
    pieces = dict(r=r, den=den, xbar=xbar, mw=mw, frac=frac)
    return loglik, score, hess, pieces


def partial_loglik(beta, time, event, covariates, weights=None, ties="efron"):
    """Log partial likelihood, score vector and Hessian at ``beta``."""
    rs = _prepare(time, event, covariates, weights)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    ll, score, hess, _ = _terms(beta, rs, ties)
    return ll, score, hess


def _score_residuals(rs: _RiskSetData, pieces) -> np.ndarray:
    """Per-subject score residuals in sorted order (unweighted by the case weight).

    The case-weighted sum of the residuals equals the partial-likelihood score.
    """
    X = rs.X
    n, q = X.shape
    g = rs.ev_group
    r, den, xbar, mw, frac = (pieces[k] for k in ("r", "den", "xbar", "mw", "frac"))
    dlam = mw / den  # hazard increment per (k, l)
    K = rs.n_groups

    A = _group_sum(rs, dlam)
    B = _group_sum(rs, dlam[:, None] * xbar)
    A_tied = _group_sum(rs, (1 - frac) * dlam)
    B_tied = _group_sum(rs, ((1 - frac) * dlam)[:, None] * xbar)
    xbar_mean = _group_sum(rs, xbar) / np.bincount(g, minlength=K)[:, None]

    cumA = np.concatenate(([0.0], np.cumsum(A)))
    cumB = np.vstack([np.zeros((1, q)), np.cumsum(B, axis=0)])
    k_i = rs.group_of_subject  # number of event times <= T_i
    a_i = cumA[k_i].copy()
    b_i = cumB[k_i].copy()

    e = rs.ev_idx
    # tied deaths get the Efron-reduced share of their own time's increment
    ke = g
    a_i[e] += A_tied[ke] - A[ke]
    b_i[e] += B_tied[ke] - B[ke]

    resid = -(r[:, None] * (X * a_i[:, None] - b_i))
    resid[e] += X[e] - xbar_mean[ke]
    return resid


def cox_weighted(
    time,
    event,
    covariates,
    weights=None,
    ties: str = "efron",
    tol: float = 1e-9,
    max_iter: int = 50,
    robust: bool = True,
) -> CoxEstimate:
    """Maximise the case-weighted Cox partial likelihood by Newton-Raphson.

    Robust standard errors come from the sandwich
    ``I^-1 (sum_i (w_i U_i)(w_i U_i)^T) I^-1`` with ``U_i`` the score
    residuals and ``I`` the observed information.

    A likelihood that keeps increasing as a coefficient diverges (monotone
    likelihood, e.g. every event in one group precedes the other group) is
    reported with ``converged=False``; it is recognised by a coefficient
    above 25 in absolute value, or above 8 with a standard error larger
    than the coefficient itself.
    """
    rs = _prepare(time, event, covariates, weights)
    q = rs.X.shape[1]
    beta = np.zeros(q)
    ll, score, hess, pieces = _terms(beta, rs, ties)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(-hess, score)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            ll_c, score_c, hess_c, pieces_c = _terms(cand, rs, ties)
            if np.isfinite(ll_c) and ll_c >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
        else:
            break
        rel_change = abs(ll_c - ll) / max(1.0, abs(ll))
        beta, ll, score, hess, pieces = cand, ll_c, score_c, hess_c, pieces_c
        if np.max(np.abs(beta)) > 25:
            # monotone likelihood: the estimate runs off to infinity
            break
        # the absolute score target is below round-off for very large cohorts,
        # so a negligible Newton step with a flat likelihood also counts
        if np.max(np.abs(score)) < tol or (rel_change < 1e-12 and np.max(np.abs(t * step)) < 1e-8):
            converged = True
            break

    n_events = int(rs.d.sum())
    info = -hess
    try:
        info_inv = np.linalg.inv(info)
        naive = np.sqrt(np.clip(np.diag(info_inv), 0, None))
        if robust:
            resid = _score_residuals(rs, pieces) * rs.w[:, None]
            cov_r = info_inv @ (resid.T @ resid) @ info_inv
            robust_se = np.sqrt(np.clip(np.diag(cov_r), 0, None))
        else:
            cov_r = None
            robust_se = np.full(q, np.nan)
    except np.linalg.LinAlgError:
        converged = False
        naive = robust_se = np.full(q, np.nan)
        cov_r = np.full((q, q), np.nan)
    if not np.all(np.isfinite(np.exp(beta))):
        converged = False
    # A coefficient drifting off to infinity stalls once the information has
    # decayed: the score is tiny but the standard error dwarfs the estimate.
    if np.any((np.abs(beta) > 8) & ~(naive < np.abs(beta))):
        converged = False
    return CoxEstimate(
        log_hr=beta,
        naive_se=naive,
        robust_se=robust_se,
        converged=converged,
        n_events=n_events,
        ties=ties,
        iterations=it,
        loglik=ll,
        cov_robust=cov_r,
    )


def wald_ci(estimate: CoxEstimate, level: float = 0.95, index: int = 0) -> tuple[float, float]:
    """Wald interval on the hazard-ratio scale using the robust SE."""
    if not estimate.converged:
        raise CoxError("estimate did not converge")
    if level == 0.95:
        z = Z_975
    else:
        from scipy.stats import norm

        z = float(norm.ppf(0.5 + level / 2))
    b = float(estimate.log_hr[index])
    se = float(estimate.robust_se[index])
    return math.exp(b - z * se), math.exp(b + z * se)


@dataclass(frozen=True)
class CurvePoint:
    fraction: float
    hr: float
    reachable: bool = True


def hr_curve(
    cohort,
    weights=None,
    grid=(0.25, 0.5, 0.75, 1.0),
    mode: str = "marginal",
    x_axis: str = "event_fraction",
    ties: str = "efron",
) -> list[CurvePoint]:
    """Hazard ratio estimated from follow-up start up to a moving cut-off.

    For each fraction ``q`` the cut-off ``t_q`` is the time at which
    ``ceil(q * n)`` subjects have had an event (``event_fraction``) or have
    had an event or been censored (``resolved_fraction``). Everyone still
    under follow-up at ``t_q`` is censored there and the Cox model is
    refitted. ``mode="marginal"`` uses treatment only, ``"conditional"``
    uses treatment plus all covariates.

    Unreachable fractions are returned with ``reachable=False`` and
    ``hr=nan``.
    """
    T = np.asarray(cohort.T, dtype=float)
    D = np.asarray(cohort.D).astype(bool)
    Z = np.asarray(cohort.Z, dtype=float)
    n = T.size
    if len(grid) == 0:
        raise ValueError("empty fraction grid")
    if mode == "marginal":
        cov = Z[:, None]
    elif mode == "conditional":
        cov = np.column_stack([Z, cohort.X])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if x_axis == "event_fraction":
        marks = np.sort(T[D])
    elif x_axis == "resolved_fraction":
        marks = np.sort(T)
    else:
        raise ValueError(f"unknown x_axis {x_axis!r}")

    out = []
    for q in grid:
        if not 0 < q <= 1:
            raise ValueError(f"fraction {q} outside (0, 1]")
        k = math.ceil(q * n - 1e-9)
        if k > marks.size or k < 1:
            out.append(CurvePoint(float(q), float("nan"), False))
            continue
        tq = marks[k - 1]
        cut = T > tq
        Tq = np.where(cut, tq, T)
        Dq = D & ~cut
        est = cox_weighted(Tq, Dq, cov, weights, ties=ties)
        out.append(CurvePoint(float(q), float(np.exp(est.log_hr[0])), est.converged))
    return out

"""Propensity-score balancing weights.

IPTW weights for the whole population, optimal full matching and its
stratum weights, and the probability-of-event modification that
multiplies either set of weights by ``Pr(D = 1 | Z, X)``.

Full matching
-------------
The objective is the sum, over strata, of ``|ps_t - ps_c|`` for every
treated-control pair in the stratum. A stratum with at least two treated
and at least two controls can always be split into smaller valid strata
using a subset of its pairs, so some optimum consists only of "stars"
(one treated with any number of controls, or one control with any number
of treated). A star forest covering everyone is a bipartite edge cover
whose cost is exactly the objective, so the problem is a minimum-weight
edge cover. That is solved exactly as a min-cost bipartite matching on
reduced costs ``d(t, c) - m(t) - m(c)``, where ``m`` is a subject's
distance to its nearest opposite-group subject; subjects left unmatched
join their nearest neighbour.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, min_weight_full_bipartite_matching

from .numkit.logistic import logistic_irls

PROB_CLIP = 1e-6
METHODS = ("IPTW", "IPTW_PEW1", "IPTW_PEW2", "PSM", "PSM_PEW1", "PSM_PEW2")


@dataclass(frozen=True)
class WeightSet:
    method: str
    w: np.ndarray

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not np.all(np.isfinite(self.w)) or not np.all(self.w > 0):
            raise ValueError("weights must be finite and positive")


@dataclass(frozen=True)
class FullMatchResult:
    stratum_of: np.ndarray
    n_treated: np.ndarray  # per stratum
    n_control: np.ndarray
    p_z: float
    total_distance: float

    @property
    def n_strata(self) -> int:
        return self.n_treated.size

    def strata(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.stratum_of == s) for s in range(self.n_strata)]


def _design(*cols) -> np.ndarray:
    n = cols[0].shape[0]
    parts = [np.ones((n, 1))] + [np.asarray(c, dtype=float).reshape(n, -1) for c in cols]
    return np.hstack(parts)


def fit_ps(cohort) -> np.ndarray:
    """Logistic PS model of Z on an intercept and all ten covariates."""
    Z = np.asarray(cohort.Z)
    if Z.min() == Z.max():
        raise ValueError("both treatment groups must be nonempty")
    fit = logistic_irls(_design(cohort.X), Z)
    return np.clip(fit.predict(_design(cohort.X)), PROB_CLIP, 1 - PROB_CLIP)


def fit_event_prob(cohort) -> np.ndarray:
    """Unweighted logistic model of D on an intercept, Z and all ten covariates.

    With no censored (or no uncensored) subjects the model is degenerate;
    a constant clipped vector is returned with a warning.
    """
    D = np.asarray(cohort.D)
    if D.min() == D.max():
        warnings.warn("event indicator is constant; event-probability model skipped", RuntimeWarning)
        return np.full(D.shape, 1 - PROB_CLIP if D[0] == 1 else PROB_CLIP)
    X = _design(cohort.Z, cohort.X)
    fit = logistic_irls(X, D)
    return np.clip(fit.predict(X), PROB_CLIP, 1 - PROB_CLIP)


def iptw_weights(ps, Z) -> np.ndarray:
    ps = np.asarray(ps, dtype=float)
    Z = np.asarray(Z, dtype=float)
    return Z / ps + (1 - Z) / (1 - ps)


def pe_modify(w_ps, p_event) -> np.ndarray:
    return np.asarray(w_ps, dtype=float) * np.asarray(p_event, dtype=float)


def _nearest_abs_distance(src: np.ndarray, dst_sorted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each ``src`` value to its nearest ``dst_sorted`` value, and that index.

    Ties go to the lower index.
    """
    pos = np.searchsorted(dst_sorted, src)
    left = np.clip(pos - 1, 0, dst_sorted.size - 1)
    right = np.clip(pos, 0, dst_sorted.size - 1)
    dl = np.abs(src - dst_sorted[left])
    dr = np.abs(dst_sorted[right] - src)
    take_left = dl <= dr
    return np.where(take_left, dl, dr), np.where(take_left, left, right)


def full_match(ps, Z, chunk: int = 512) -> FullMatchResult:
    """Optimal full matching on the propensity score (probability scale).

    Minimises the summed absolute PS difference over all within-stratum
    treated-control pairs. Ties are broken by (ps, subject index) order,
    so the result does not depend on how subjects are listed when their
    scores are distinct.
    """
    ps = np.asarray(ps, dtype=float)
    Z = np.asarray(Z).astype(bool)
    if ps.shape != Z.shape:
        raise ValueError("ps and Z must have equal length")
    t_idx = np.flatnonzero(Z)
    c_idx = np.flatnonzero(~Z)
    if t_idx.size == 0 or c_idx.size == 0:
        raise ValueError("both treatment groups must be nonempty")
    # canonical order: by score, then by original index
    t_idx = t_idx[np.lexsort((t_idx, ps[t_idx]))]
    c_idx = c_idx[np.lexsort((c_idx, ps[c_idx]))]
    pt, pc = ps[t_idx], ps[c_idx]
    nt, nc = pt.size, pc.size

    m_t, nn_t = _nearest_abs_distance(pt, pc)
    m_c, nn_c = _nearest_abs_distance(pc, pt)

    # Candidate edges: only strictly negative reduced cost can beat leaving
    # both endpoints unmatched.
    rows, cols, vals = [], [], []
    for start in range(0, nt, chunk):
        blk = slice(start, min(start + chunk, nt))
        red = np.abs(pt[blk, None] - pc[None, :]) - m_t[blk, None] - m_c[None, :]
        r, c = np.nonzero(red < 0)
        rows.append(r + start)
        cols.append(c)
        vals.append(red[r, c])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)

    matched_t = np.full(nt, -1)
    if rows.size:
        # Each treated row also gets a private "stay unmatched" column with
        # reduced cost 0. Shift all costs positive: every row is matched
        # exactly once, so a constant shift leaves the optimum unchanged and
        # keeps sparse storage from dropping explicit zeros.
        shift = 1.0 - vals.min()
        r_all = np.concatenate([rows, np.arange(nt)])
        c_all = np.concatenate([cols, nc + np.arange(nt)])
        v_all = np.concatenate([vals + shift, np.full(nt, shift)])
        graph = csr_matrix((v_all, (r_all, c_all)), shape=(nt, nc + nt))
        row_ind, col_ind = min_weight_full_bipartite_matching(graph)
        col_of_row = np.empty(nt, dtype=int)
        col_of_row[row_ind] = col_ind
        real = col_of_row < nc
        matched_t[real] = col_of_row[real]

    matched_c = np.full(nc, -1)
    has = matched_t >= 0
    matched_c[matched_t[has]] = np.flatnonzero(has)

    # Edge cover: matched pairs plus a nearest-neighbour edge for the rest.
    edges = {(int(t), int(c)) for t, c in zip(np.flatnonzero(has), matched_t[has])}
    for t in np.flatnonzero(~has):
        edges.add((int(t), int(nn_t[t])))
    for c in np.flatnonzero(matched_c < 0):
        edges.add((int(nn_c[c]), int(c)))
    edges = _prune_to_stars(sorted(edges), nt, nc)

    e = np.array(edges)
    adj = csr_matrix((np.ones(len(e)), (e[:, 0], nt + e[:, 1])), shape=(nt + nc, nt + nc))
    n_comp, labels = connected_components(adj, directed=False)

    # Renumber strata by first appearance in original subject order.
    stratum_sorted = np.empty(ps.size, dtype=int)
    stratum_sorted[t_idx] = labels[:nt]
    stratum_sorted[c_idx] = labels[nt:]
    _, first = np.unique(stratum_sorted, return_index=True)
    relabel = np.empty(n_comp, dtype=int)
    relabel[stratum_sorted[np.sort(first)]] = np.arange(n_comp)
    stratum_of = relabel[stratum_sorted]

    n_treated = np.bincount(stratum_of[Z], minlength=n_comp)
    n_control = np.bincount(stratum_of[~Z], minlength=n_comp)
    total = _within_stratum_distance(ps, Z, stratum_of)
    return FullMatchResult(stratum_of, n_treated, n_control, float(Z.mean()), total)


def _prune_to_stars(edges, nt: int, nc: int):
    """Drop edges whose two endpoints are both covered elsewhere.

    A minimal edge cover contains no path of three edges, so every
    component left over is a star. Only zero-length edges can be redundant
    in an optimal cover, so the cost is unchanged.
    """
    deg_t = np.zeros(nt, dtype=int)
    deg_c = np.zeros(nc, dtype=int)
    for t, c in edges:
        deg_t[t] += 1
        deg_c[c] += 1
    kept = []
    for t, c in edges:
        if deg_t[t] > 1 and deg_c[c] > 1:
            deg_t[t] -= 1
            deg_c[c] -= 1
        else:
            kept.append((t, c))
    return kept


def _within_stratum_distance(ps, Z, stratum_of) -> float:
    total = 0.0
    order = np.argsort(stratum_of, kind="stable")
    bounds = np.flatnonzero(np.diff(stratum_of[order])) + 1
    for members in np.split(order, bounds):
        zt = Z[members]
        total += float(np.abs(ps[members][zt][:, None] - ps[members][~zt][None, :]).sum())
    return total


def full_match_weights(match: FullMatchResult, Z) -> np.ndarray:
    """Stratum weights: treated ``p_z (n1 + n0) / n1``, controls ``(1 - p_z)(n1 + n0) / n0``."""
    Z = np.asarray(Z).astype(bool)
    s = match.stratum_of
    n1 = match.n_treated[s].astype(float)
    n0 = match.n_control[s].astype(float)
    size = n1 + n0
    return np.where(Z, match.p_z * size / n1, (1 - match.p_z) * size / n0)


def build_weight_sets(cohort, p_event_true, p_event_hat=None) -> dict[str, WeightSet]:
    """All six analysis weight sets for one cohort.

    In the counterfactual setting every subject has an exact analogue in
    the other arm, so the PS is constant and both PS weightings reduce to
    unit weights; PS fitting and matching are skipped.
    """
    n = cohort.n
    if cohort.setting == "counterfactual":
        w_iptw = np.ones(n)
        w_psm = np.ones(n)
    else:
        ps = fit_ps(cohort)
        w_iptw = iptw_weights(ps, cohort.Z)
        w_psm = full_match_weights(full_match(ps, cohort.Z), cohort.Z)
    if p_event_hat is None:
        p_event_hat = fit_event_prob(cohort)
    p_event_true = np.clip(np.broadcast_to(p_event_true, (n,)), PROB_CLIP, 1.0)
    return {
        "IPTW": WeightSet("IPTW", w_iptw),
        "IPTW_PEW1": WeightSet("IPTW_PEW1", pe_modify(w_iptw, p_event_true)),
        "IPTW_PEW2": WeightSet("IPTW_PEW2", pe_modify(w_iptw, p_event_hat)),
        "PSM": WeightSet("PSM", w_psm),
        "PSM_PEW1": WeightSet("PSM_PEW1", pe_modify(w_psm, p_event_true)),
        "PSM_PEW2": WeightSet("PSM_PEW2", pe_modify(w_psm, p_event_hat)),
    }

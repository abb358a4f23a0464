import numpy as np
import pytest
from _oracles import full_match_bruteforce
from hypothesis import given, settings
from hypothesis import strategies as st

from mhrsim.balance import (
    METHODS,
    FullMatchResult,
    WeightSet,
    build_weight_sets,
    fit_event_prob,
    fit_ps,
    full_match,
    full_match_weights,
    iptw_weights,
    pe_modify,
)
from mhrsim.censorcal import apply_censoring, draw_censoring, make_plan, tau_of, true_event_prob
from mhrsim.numkit import rng_stream
from mhrsim.synthcohort import DgpParams, make_cohort


@pytest.fixture(scope="module")
def obs6000():
    p = DgpParams(alpha_star=0.7)
    c = make_cohort("observational", 6000, p, rng_stream(21))
    tau = tau_of(c.LP, p.lam, p.eta)
    plan = make_plan(tau, 0.5, "uniform", p.eta)
    c = apply_censoring(c, draw_censoring(plan, c.n, rng_stream(21, 0, 1)))
    return c, true_event_prob(tau, plan)


def test_iptw_examples():
    assert iptw_weights(0.5, 1) == 2
    assert iptw_weights(0.8, 0) == pytest.approx(5)


def test_pe_examples():
    np.testing.assert_array_equal(pe_modify([1.5, 3.0], [1.0, 1.0]), [1.5, 3.0])
    assert pe_modify(2.0, 0.5) == 1.0


def test_fit_ps_counterfactual_is_flat():
    c = make_cohort("counterfactual", 2000, DgpParams(), rng_stream(22))
    np.testing.assert_allclose(fit_ps(c), 0.5, atol=1e-8)


def test_fit_ps_tracks_truth(obs6000):
    c, _ = obs6000
    assert np.corrcoef(fit_ps(c), c.true_ps)[0, 1] > 0.95


def test_fit_ps_rejects_single_arm():
    c = make_cohort("observational", 50, DgpParams(), rng_stream(23))
    c.Z[:] = 1
    with pytest.raises(ValueError):
        fit_ps(c)


def test_iptw_totals(obs6000):
    c, _ = obs6000
    w = iptw_weights(fit_ps(c), c.Z)
    assert w[c.Z == 1].sum() == pytest.approx(c.n, rel=0.05)
    assert w[c.Z == 0].sum() == pytest.approx(c.n, rel=0.05)


def test_iptw_reduces_imbalance(obs6000):
    c, _ = obs6000
    w = iptw_weights(fit_ps(c), c.Z)
    t, k = c.Z == 1, c.Z == 0

    def smd(weights):
        mt = np.average(c.X[t], axis=0, weights=weights[t])
        mc = np.average(c.X[k], axis=0, weights=weights[k])
        sd = np.sqrt(0.5 * (c.X[t].var(0) + c.X[k].var(0)))
        return np.abs(mt - mc) / sd

    assert np.median(smd(w)) < np.median(smd(np.ones(c.n)))


def test_event_prob_calibration_identity(obs6000):
    c, p_true = obs6000
    p_hat = fit_event_prob(c)
    assert p_hat.mean() == pytest.approx(c.D.mean(), abs=1e-8)
    assert np.corrcoef(p_hat, p_true)[0, 1] > 0.9
    w = iptw_weights(fit_ps(c), c.Z)
    assert np.corrcoef(pe_modify(w, p_true), pe_modify(w, p_hat))[0, 1] > 0.95


def test_event_prob_degenerate_warns():
    c = make_cohort("observational", 100, DgpParams(), rng_stream(24))
    with pytest.warns(RuntimeWarning):
        p = fit_event_prob(c)
    assert np.all(p == p[0]) and p[0] > 0.999


def test_full_match_single_treated():
    m = full_match([0.6, 0.5, 0.55], [1, 0, 0])
    assert m.n_strata == 1
    assert m.total_distance == pytest.approx(0.15)


def test_full_match_two_pairs():
    m = full_match([0.2, 0.8, 0.21, 0.79], [1, 1, 0, 0])
    assert m.n_strata == 2
    assert m.stratum_of[0] == m.stratum_of[2] and m.stratum_of[1] == m.stratum_of[3]
    assert m.total_distance == pytest.approx(0.02, abs=1e-12)


def test_full_match_rejects_empty_group():
    with pytest.raises(ValueError):
        full_match([0.3, 0.4], [1, 1])


def test_match_weights_examples():
    one = FullMatchResult(np.zeros(3, int), np.array([1]), np.array([2]), 1 / 3, 0.0)
    np.testing.assert_allclose(full_match_weights(one, [1, 0, 0]), 1.0)
    two = FullMatchResult(np.zeros(3, int), np.array([2]), np.array([1]), 0.5, 0.0)
    np.testing.assert_allclose(full_match_weights(two, [1, 1, 0]), [0.75, 0.75, 1.5])


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 8).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.01, 0.99), min_size=n, max_size=n),
    st.lists(st.booleans(), min_size=n, max_size=n).filter(lambda z: 0 < sum(z) < len(z)),
)))
def test_full_match_is_optimal(data):
    ps, Z = np.array(data[0]), np.array(data[1])
    m = full_match(ps, Z)
    assert m.total_distance == pytest.approx(full_match_bruteforce(ps, Z), abs=1e-12)
    assert np.all(m.n_treated >= 1) and np.all(m.n_control >= 1)
    assert full_match_weights(m, Z).sum() == pytest.approx(len(ps), abs=1e-9)


def test_full_match_permutation_invariant():
    rng = np.random.default_rng(25)
    ps = rng.uniform(0.05, 0.95, 300)
    Z = rng.random(300) < 0.4
    a = full_match(ps, Z)
    perm = rng.permutation(300)
    b = full_match(ps[perm], Z[perm])
    groups = lambda m, idx: {frozenset(idx[s]) for s in m.strata()}
    assert groups(a, np.arange(300)) == groups(b, perm)
    assert a.total_distance == pytest.approx(b.total_distance, rel=1e-12)


def test_full_match_weights_sum_at_scale(obs6000):
    c, _ = obs6000
    m = full_match(fit_ps(c), c.Z)
    assert full_match_weights(m, c.Z).sum() == pytest.approx(c.n, abs=1e-9 * c.n)


def test_weight_sets(obs6000):
    c, p_true = obs6000
    ws = build_weight_sets(c, p_true)
    assert tuple(ws) == METHODS
    for base in ("IPTW", "PSM"):
        for pe in ("_PEW1", "_PEW2"):
            assert np.all(ws[base + pe].w <= ws[base].w)
    # equal event probability keeps weight ratios
    w = np.array([2.0, 6.0])
    r = pe_modify(w, [0.3, 0.3])
    assert r[1] / r[0] == pytest.approx(3.0)


def test_counterfactual_weight_sets_are_unit_ps():
    c = make_cohort("counterfactual", 200, DgpParams(), rng_stream(26))
    ws = build_weight_sets(c, 1.0, p_event_hat=np.ones(200))
    np.testing.assert_array_equal(ws["IPTW"].w, ws["PSM"].w)
    np.testing.assert_array_equal(ws["IPTW"].w, 1.0)


def test_weightset_validation():
    with pytest.raises(ValueError):
        WeightSet("IPTW", np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        WeightSet("nope", np.ones(2))

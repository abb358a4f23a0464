"""Monte Carlo study of propensity-score estimators of the marginal hazard ratio under censoring."""

from .balance import (
    METHODS, FullMatchResult, WeightSet, build_weight_sets, fit_event_prob, fit_ps,
    full_match, full_match_weights, iptw_weights, pe_modify,
)
from .censorcal import (
    CensorPlan, apply_censoring, draw_censoring, p_censor, solve_theta, tau_of, true_event_prob,
)
from .coxfit import CoxEstimate, cox_weighted, hr_curve, wald_ci
from .simharness import Scenario, ScenarioMetrics, grid_expand, metrics, run_replicate, run_scenario
from .synthcohort import Cohort, DgpParams, calibrate_alpha_star, make_cohort

__version__ = "0.1.0"

"""Monte Carlo harness: scenario grid, replicates, and summary metrics."""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .balance import METHODS, build_weight_sets
from .censorcal import apply_censoring, draw_censoring, make_plan, tau_of, true_event_prob
from .coxfit import cox_weighted, wald_ci
from .numkit.rng import RngStream
from .synthcohort import DgpParams, calibrated_params, make_cohort

log = logging.getLogger(__name__)

DEFAULT_MHRS = (0.5, 0.8, 1.0, 1.25, 2.0)
DEFAULT_SIZES = (2000, 6000, 10000)
DEFAULT_RATES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_DISTS = ("uniform", "weibull")


@dataclass(frozen=True)
class Scenario:
    setting: str
    n: int
    target_mhr: float
    censor_dist: str
    censor_rate: float
    replicates: int = 1000
    master_seed: int = 2024
    scenario_id: int = 0
    dgp: DgpParams = DgpParams()
    theta_method: str = "kde_quadrature"
    ties: str = "efron"
    calib_n: int = 1_000_000
    calib_tol: float = 0.005

    def __post_init__(self):
        if self.setting not in ("observational", "counterfactual"):
            raise ValueError(f"unknown setting {self.setting!r}")
        if not 0 <= self.censor_rate <= 0.95:
            raise ValueError("censor_rate must lie in [0, 0.95]")
        if (self.censor_dist == "none") != (self.censor_rate == 0):
            raise ValueError("censor_dist='none' if and only if censor_rate=0")
        if self.censor_dist not in ("none", "uniform", "weibull"):
            raise ValueError(f"unknown censoring distribution {self.censor_dist!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.n < 4 or (self.setting == "counterfactual" and self.n % 2):
            raise ValueError("n too small, or odd in the counterfactual setting")
        if not self.target_mhr > 0:
            raise ValueError("target MHR must be positive")

    @property
    def stream_key(self) -> int:
        """RNG key from the scenario content, independent of its grid position."""
        blob = repr((self.setting, self.n, float(self.target_mhr), self.censor_dist, float(self.censor_rate)))
        return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:4], "little")


@dataclass(frozen=True)
class ReplicateRecord:
    replicate: int
    method: str
    mhr_hat: float
    ci_lo: float
    ci_hi: float
    converged: bool
    error: str = ""


@dataclass(frozen=True)
class MethodMetrics:
    method: str
    mhr_bar: float
    bias: float
    sd: float
    rmse: float
    rel_bias: float
    coverage: float
    n_used: int


@dataclass
class ScenarioMetrics:
    scenario: Scenario
    per_method: dict = field(default_factory=dict)
    n_failed_replicates: int = 0
    usable: bool = True
    records: list = field(default_factory=list)


def grid_expand(
    settings=("counterfactual",),
    sizes=DEFAULT_SIZES,
    mhrs=DEFAULT_MHRS,
    censor_dists=DEFAULT_DISTS,
    censor_rates=DEFAULT_RATES,
    **common,
) -> list[Scenario]:
    """Cartesian product of the factor lists, ids numbered in expansion order.

    Factor order (slowest first): setting, n, MHR, censoring distribution,
    censoring rate. A zero rate pairs only with ``'none'`` and vice versa;
    other combinations with them are skipped.
    """
    factors = [settings, sizes, mhrs, censor_dists, censor_rates]
    if any(len(f) == 0 for f in factors):
        raise ValueError("factor lists must be nonempty")
    out = []
    for setting, n, mhr, dist, rate in itertools.product(*factors):
        if (dist == "none") != (float(rate) == 0):
            continue
        out.append(Scenario(setting, int(n), float(mhr), dist, float(rate),
                            scenario_id=len(out), **common))
    if not out:
        raise ValueError("factor lists produce no valid scenario")
    return out


def scenario_params(scenario: Scenario) -> DgpParams:
    return calibrated_params(
        scenario.target_mhr, scenario.dgp, calib_n=scenario.calib_n, tol=scenario.calib_tol
    )


def simulate_cohort(scenario: Scenario, replicate_id: int, params: DgpParams):
    """Censored cohort for one replicate plus its true event probabilities."""
    rng = RngStream(scenario.master_seed, scenario.stream_key, replicate_id)
    cohort = make_cohort(scenario.setting, scenario.n, params, rng)
    tau = tau_of(cohort.LP, params.lam, params.eta)
    plan = make_plan(tau, scenario.censor_rate, scenario.censor_dist, params.eta, scenario.theta_method)
    cohort = apply_censoring(cohort, draw_censoring(plan, cohort.n, rng))
    cohort.meta["plan"] = plan
    return cohort, true_event_prob(tau, plan)


def run_replicate(scenario: Scenario, replicate_id: int, params: DgpParams | None = None) -> list[ReplicateRecord]:
    """Six (method, estimate, robust 95% CI) records for one simulated dataset.

    Any exception or non-converged fit marks all six records as failed so
    the replicate drops out of every method's metrics together.
    """
    if params is None:
        params = scenario_params(scenario)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cohort, p_true = simulate_cohort(scenario, replicate_id, params)
            wsets = build_weight_sets(cohort, p_true)
        Zcol = cohort.Z[:, None].astype(float)
        fits = {m: cox_weighted(cohort.T, cohort.D, Zcol, wsets[m].w, ties=scenario.ties) for m in METHODS}
    except Exception as exc:  # recorded per replicate, never fatal for the scenario
        log.debug("replicate %d failed: %s", replicate_id, exc)
        return [ReplicateRecord(replicate_id, m, math.nan, math.nan, math.nan, False, type(exc).__name__)
                for m in METHODS]
    ok = all(f.converged for f in fits.values())
    records = []
    for m in METHODS:
        f = fits[m]
        lo, hi = wald_ci(f) if f.converged else (math.nan, math.nan)
        records.append(ReplicateRecord(replicate_id, m, f.hr, lo, hi, ok, "" if ok else "nonconverged"))
    return records


def metrics(estimates, cis, true_mhr: float, method: str = "") -> MethodMetrics:
    """Bias, SD, RMSE, relative bias and CI coverage on the hazard-ratio scale.

    SD is the sample standard deviation (``ddof=1``) of the estimates and
    RMSE is ``sqrt(bias**2 + sd**2)``.
    """
    est = np.asarray(estimates, dtype=float)
    if est.size < 2:
        raise ValueError("need at least two estimates")
    cis = np.asarray(cis, dtype=float).reshape(-1, 2)
    mhr_bar = float(est.mean())
    bias = mhr_bar - true_mhr
    sd = float(est.std(ddof=1))
    rmse = math.sqrt(bias * bias + sd * sd)
    coverage = float(np.mean((cis[:, 0] <= true_mhr) & (true_mhr <= cis[:, 1])))
    return MethodMetrics(method, mhr_bar, bias, sd, rmse, bias / true_mhr, coverage, int(est.size))


def _replicate_task(args):
    scenario, rid, params = args
    return run_replicate(scenario, rid, params)


def run_scenario(scenario: Scenario, workers: int = 1, params: DgpParams | None = None) -> ScenarioMetrics:
    """Run all replicates and aggregate per method.

    Results are identical for any ``workers`` because every replicate draws
    from its own stream. More than half the replicates failing marks the
    scenario unusable (metrics are still computed if possible).
    """
    if params is None:
        params = scenario_params(scenario)
    tasks = [(scenario, r, params) for r in range(scenario.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_replicate_task, tasks, chunksize=8))
    else:
        chunks = [_replicate_task(t) for t in tasks]
    records = [rec for chunk in chunks for rec in chunk]
    failed = {rec.replicate for rec in records if not rec.converged}
    out = ScenarioMetrics(scenario, n_failed_replicates=len(failed), records=records)
    out.usable = len(failed) <= 0.5 * scenario.replicates
    for m in METHODS:
        rows = [r for r in records if r.method == m and r.replicate not in failed]
        if len(rows) >= 2:
            out.per_method[m] = metrics(
                [r.mhr_hat for r in rows], [(r.ci_lo, r.ci_hi) for r in rows], scenario.target_mhr, m
            )
    if not out.usable:
        log.warning("scenario %d unusable: %d/%d replicates failed",
                    scenario.scenario_id, len(failed), scenario.replicates)
    return out


def with_replicates(scenarios, replicates: int):
    return [replace(s, replicates=int(replicates)) for s in scenarios]

"""Censoring mechanisms calibrated to a target censoring proportion.

Event times are Weibull with shape ``eta`` and subject-specific scale
``tau``, so ``S(t) = exp(-(t / tau)^eta)``. For uniform and Weibull
censoring the probability of being censored has a closed form in ``tau``
and the censoring scale ``theta``; averaging it over the distribution of
``tau`` and solving for ``theta`` gives a censoring scale that yields the
requested censoring proportion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .numkit.kde import kde_gaussian
from .numkit.roots import BracketError, brent_root
from .numkit.special import lower_inc_gamma

DISTS = ("none", "uniform", "weibull")
THETA_METHODS = ("kde_quadrature", "sample_average")
QUAD_POINTS = 512


@dataclass(frozen=True)
class CensorPlan:
    dist: str = "none"
    theta: float = float("nan")
    pi: float = 0.0
    eta: float = 2.0

    def __post_init__(self):
        if self.dist not in DISTS:
            raise ValueError(f"unknown censoring distribution {self.dist!r}")
        if self.dist == "none" and self.pi != 0:
            raise ValueError("dist='none' requires pi=0")
        if self.dist != "none" and not (self.theta > 0 or math.isnan(self.theta)):
            raise ValueError("theta must be positive")


def tau_of(LP, lam: float, eta: float):
    """Weibull scale of the event time, ``(lam * exp(LP))^(-1/eta)``."""
    if not (lam > 0 and eta > 0):
        raise ValueError("lambda and eta must be positive")
    return (lam * np.exp(np.asarray(LP, dtype=float))) ** (-1.0 / eta)


def p_censor(tau, eta: float, theta: float, dist: str):
    """Probability ``Pr(C < Y)`` for a subject with event-time scale ``tau``.

    uniform(0, theta):   (tau / (eta theta)) * lower_gamma(1/eta, (theta/tau)^eta)
    weibull(eta, theta): 1 / (1 + (theta/tau)^eta)
    """
    tau = np.asarray(tau, dtype=float)
    if not theta > 0 or np.any(tau <= 0):
        raise ValueError("tau and theta must be positive")
    ratio = (theta / tau) ** eta
    if dist == "weibull":
        return 1.0 / (1.0 + ratio)
    if dist == "uniform":
        return tau / (eta * theta) * lower_inc_gamma(1.0 / eta, ratio)
    raise ValueError(f"no censoring probability for dist={dist!r}")


def p_censor_uniform_eta2(tau, theta: float):
    """Uniform-censoring probability for ``eta = 2`` via the error function."""
    from scipy.special import erf

    tau = np.asarray(tau, dtype=float)
    return tau / (2.0 * theta) * math.sqrt(math.pi) * erf(theta / tau)


class _KdeQuadrature:
    """Trapezoid quadrature nodes and weights for the KDE of ``tau``."""

    def __init__(self, tau_sample: np.ndarray, n_points: int = QUAD_POINTS):
        kde = kde_gaussian(tau_sample)
        lo, hi = kde.support
        # tau is a positive scale; the Gaussian kernel spills below zero
        lo = max(lo, float(tau_sample.min()) * 1e-3)
        self.nodes = np.linspace(lo, hi, n_points)
        dens = kde(self.nodes)
        w = np.full(n_points, self.nodes[1] - self.nodes[0])
        w[[0, -1]] *= 0.5
        w *= dens
        # renormalise over the positive half-line
        self.weights = w / w.sum()

    def mean(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def solve_theta(
    tau_sample,
    pi: float,
    eta: float,
    dist: str,
    method: str = "kde_quadrature",
    tol: float = 1e-6,
) -> float:
    """Censoring scale ``theta`` giving mean censoring probability ``pi``.

    ``method="kde_quadrature"`` averages ``p_censor`` against a Gaussian KDE
    of ``tau`` (512-node trapezoid rule); ``"sample_average"`` averages it
    over the sample directly.
    """
    if not 0 < pi < 1:
        raise ValueError("pi must lie in (0, 1)")
    tau = np.asarray(tau_sample, dtype=float).ravel()
    if tau.size == 0:
        raise ValueError("empty tau sample")
    if dist not in ("uniform", "weibull"):
        raise ValueError(f"cannot calibrate dist={dist!r}")
    if method == "kde_quadrature":
        quad = _KdeQuadrature(tau)
        mean = quad.mean
    elif method == "sample_average":
        def mean(f):
            return float(np.mean(f(tau)))
    else:
        raise ValueError(f"unknown theta method {method!r}")

    # log-theta parametrisation keeps Brent well scaled over many decades
    def gamma(log_theta):
        theta = math.exp(log_theta)
        return mean(lambda t: p_censor(t, eta, theta, dist)) - pi

    med = float(np.median(tau))
    lo, hi = math.log(1e-6 * med), math.log(1e6 * med)
    for _ in range(20):
        if gamma(lo) > 0 > gamma(hi):
            break
        lo -= math.log(10.0)
        hi += math.log(10.0)
    else:
        raise BracketError("could not bracket theta")
    log_theta = brent_root(gamma, lo, hi, tol=1e-13)
    if abs(gamma(log_theta)) >= tol:
        raise BracketError("theta root did not meet tolerance")
    return math.exp(log_theta)


def make_plan(tau_sample, pi: float, dist: str, eta: float, method: str = "kde_quadrature") -> CensorPlan:
    if dist == "none" or pi == 0:
        return CensorPlan("none", float("nan"), 0.0, eta)
    return CensorPlan(dist, solve_theta(tau_sample, pi, eta, dist, method), pi, eta)


def draw_censoring(plan: CensorPlan, n: int, rng) -> np.ndarray:
    if plan.dist == "none":
        return np.full(n, np.inf)
    u = rng.uniform(n)
    if plan.dist == "uniform":
        return plan.theta * u
    # survival exp(-(t / theta)^eta)
    return plan.theta * (-np.log(u)) ** (1.0 / plan.eta)


def apply_censoring(cohort, C):
    """Return a copy of ``cohort`` with ``C`` set and ``T``, ``D`` recomputed."""
    C = np.asarray(C, dtype=float)
    if C.shape != cohort.Y.shape:
        raise ValueError("censoring vector length does not match cohort")
    T = np.minimum(cohort.Y, C)
    D = (cohort.Y <= C).astype(np.int8)
    return replace(cohort, C=C, T=T, D=D, meta=dict(cohort.meta))


def true_event_prob(tau, plan: CensorPlan):
    """``Pr(D = 1 | Z, X)`` under the known event and censoring distributions."""
    if plan.dist == "none":
        return np.ones(np.shape(tau)) if np.ndim(tau) else 1.0
    return 1.0 - p_censor(tau, plan.eta, plan.theta, plan.dist)

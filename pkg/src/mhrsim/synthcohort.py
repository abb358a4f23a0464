"""Synthetic cohorts with a known marginal hazard ratio.

Ten baseline covariates (six Bernoulli(0.5), four standard normal), a
logistic treatment model without intercept, and Weibull event times with
proportional hazards in treatment and covariates. The conditional log
hazard ratio is tuned by bisection so that the marginal hazard ratio hits
a requested value.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .coxfit import cox_weighted
from .numkit.logistic import expit
from .numkit.rng import RngStream

log = logging.getLogger(__name__)

# zero-based column indices
BINARY_COLS = (0, 2, 4, 5, 7, 8)
NORMAL_COLS = (1, 3, 6, 9)

DEFAULT_ZETA = (0.8, -0.25, 0.6, -0.4, -0.8, -0.5, 0.7, 0.0, 0.0, 0.0)
DEFAULT_BETA = (0.3, -0.36, -0.73, -0.2, 0.0, 0.0, 0.0, 0.71, -0.19, 0.26)

CALIBRATION_SEED = 20_230_901
# bump when the generating process changes so stale cache entries are ignored
DGP_VERSION = 2
SETTINGS = ("observational", "counterfactual")


@dataclass(frozen=True)
class DgpParams:
    zeta: tuple = DEFAULT_ZETA
    beta: tuple = DEFAULT_BETA
    lam: float = 0.00002
    eta: float = 2.0
    alpha_star: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and self.eta > 0):
            raise ValueError("lambda and eta must be positive")
        if len(self.zeta) != 10 or len(self.beta) != 10:
            raise ValueError("zeta and beta must have length 10")
        object.__setattr__(self, "zeta", tuple(float(v) for v in self.zeta))
        object.__setattr__(self, "beta", tuple(float(v) for v in self.beta))

    def cache_key(self, target_mhr: float) -> str:
        blob = repr((DGP_VERSION, round(float(target_mhr), 12), self.zeta, self.beta, self.lam, self.eta))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Cohort:
    setting: str
    X: np.ndarray
    Z: np.ndarray
    true_ps: np.ndarray
    LP: np.ndarray
    Y: np.ndarray
    C: np.ndarray = None
    T: np.ndarray = None
    D: np.ndarray = None
    # extra truth carried alongside, e.g. the censoring plan once applied
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.C is None:
            self.C = np.full(self.Y.shape, np.inf)
        if self.T is None:
            self.T = np.minimum(self.Y, self.C)
            self.D = (self.Y <= self.C).astype(np.int8)

    @property
    def n(self) -> int:
        return self.Y.size


def gen_covariates(n: int, rng: RngStream) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    X = np.empty((n, 10))
    X[:, BINARY_COLS] = rng.bernoulli(0.5, size=(n, len(BINARY_COLS)))
    X[:, NORMAL_COLS] = rng.normal(size=(n, len(NORMAL_COLS)))
    return X


def true_ps(X: np.ndarray, zeta=DEFAULT_ZETA) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != 10:
        raise ValueError("X must have 10 columns")
    return expit(X @ np.asarray(zeta, dtype=float))


def assign_treatment(ps, rng: RngStream) -> np.ndarray:
    ps = np.asarray(ps, dtype=float)
    if np.any((ps < 0) | (ps > 1)):
        raise ValueError("propensity scores must lie in [0, 1]")
    return rng.bernoulli(ps)


def event_time_from_uniform(u, LP, lam: float, eta: float) -> np.ndarray:
    """Weibull inversion, ``(-log u / (lam * exp(LP)))^(1/eta)``."""
    return (-np.log(u) / (lam * np.exp(LP))) ** (1.0 / eta)


def gen_event_time(LP, lam: float, eta: float, rng: RngStream) -> np.ndarray:
    if not (lam > 0 and eta > 0):
        raise ValueError("lambda and eta must be positive")
    LP = np.asarray(LP, dtype=float)
    return event_time_from_uniform(rng.uniform(LP.shape), LP, lam, eta)


def _counterfactual_parts(m: int, rng: RngStream):
    # one latent uniform per subject drives both potential event times
    X = gen_covariates(m, rng)
    u = np.repeat(rng.uniform((m, 1)), 2, axis=1)
    return X, u


def _assemble_counterfactual(X, u, params: DgpParams, alpha_star: float, with_ps: bool = True) -> Cohort:
    m = X.shape[0]
    Xd = np.repeat(X, 2, axis=0)
    Z = np.tile(np.array([1, 0], dtype=np.int8), m)
    LP = alpha_star * Z + Xd @ np.asarray(params.beta)
    Y = event_time_from_uniform(u.ravel(), LP, params.lam, params.eta)
    ps = true_ps(Xd, params.zeta) if with_ps else np.full(Z.shape, np.nan)
    return Cohort("counterfactual", Xd, Z, ps, LP, Y)


def make_cohort(
    setting: str,
    n: int,
    params: DgpParams,
    rng: RngStream,
    alpha_star: float | None = None,
) -> Cohort:
    """Draw one cohort of ``n`` rows.

    In the counterfactual setting ``n // 2`` subjects are generated and each
    appears twice, on adjacent rows, once treated and once untreated. Both
    potential event times come from the same latent uniform draw, so the
    pair differs only through the treatment term of the linear predictor. ``alpha_star`` defaults to
    ``params.alpha_star``.
    """
    a = params.alpha_star if alpha_star is None else float(alpha_star)
    if setting == "counterfactual":
        if n % 2:
            raise ValueError("counterfactual cohorts need an even n")
        X, u = _counterfactual_parts(n // 2, rng)
        return _assemble_counterfactual(X, u, params, a)
    if setting != "observational":
        raise ValueError(f"unknown setting {setting!r}")
    X = gen_covariates(n, rng)
    ps = true_ps(X, params.zeta)
    Z = assign_treatment(ps, rng)
    LP = a * Z + X @ np.asarray(params.beta)
    Y = gen_event_time(LP, params.lam, params.eta, rng)
    return Cohort("observational", X, Z, ps, LP, Y)


def marginal_mhr_uncensored(X, u, params: DgpParams, alpha_star: float) -> float:
    c = _assemble_counterfactual(X, u, params, alpha_star, with_ps=False)
    est = cox_weighted(c.Y, np.ones(c.n, dtype=bool), c.Z[:, None].astype(float), ties="breslow", robust=False)
    return float(np.exp(est.log_hr[0]))


class CalibrationError(RuntimeError):
    pass


_memo: dict = {}


def default_cache_path() -> Path:
    env = os.environ.get("MHRSIM_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "mhrsim" / "alpha_star.txt"


def _read_cache(path: Path) -> dict:
    entries = {}
    if path is None or not path.exists():
        return entries
    for line in path.read_text().splitlines():
        parts = line.split()
        if len(parts) != 4 or parts[0].startswith("#"):
            continue
        key, a, calib_n, tol = parts
        entries[(key, int(calib_n), float(tol))] = float(a)
    return entries


def _append_cache(path: Path, key: str, alpha_star: float, calib_n: int, tol: float):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as fh:
        fh.write(f"{key} {alpha_star!r} {calib_n} {tol!r}\n")


def calibrate_alpha_star(
    target_mhr: float,
    params: DgpParams = DgpParams(),
    calib_n: int = 1_000_000,
    tol: float = 0.005,
    seed: int = CALIBRATION_SEED,
    cache_path: Path | str | None = "default",
    max_iter: int = 60,
) -> float:
    """Conditional log-HR whose uncensored counterfactual marginal HR is ``target_mhr``.

    Bisection on a single fixed sample of ``calib_n`` counterfactual pairs
    (common random numbers, so the fitted marginal HR is monotone in the
    conditional log-HR). Starting bracket is ``[3 log(target), 0]`` for
    targets below one and its mirror above one, widened if it fails to
    bracket. Results are memoised and appended to a text cache file; pass
    ``cache_path=None`` to disable the file.
    """
    if not target_mhr > 0:
        raise ValueError("target MHR must be positive")
    if cache_path == "default":
        cache_path = default_cache_path()
    cache_path = Path(cache_path) if cache_path is not None else None
    key = params.cache_key(target_mhr)
    memo_key = (key, int(calib_n), float(tol), int(seed))
    if memo_key in _memo:
        return _memo[memo_key]
    if seed == CALIBRATION_SEED:
        cached = _read_cache(cache_path).get((key, int(calib_n), float(tol)))
        if cached is not None:
            _memo[memo_key] = cached
            return cached

    target = math.log(target_mhr)
    if target == 0.0:
        _memo[memo_key] = 0.0
        return 0.0

    rng = RngStream(seed, 0, 0)
    X, u = _counterfactual_parts(int(calib_n), rng)

    def fitted(a):
        return math.log(marginal_mhr_uncensored(X, u, params, a))

    lo, hi = sorted((3.0 * target, 0.0))
    for _ in range(10):
        f_lo, f_hi = fitted(lo) - target, fitted(hi) - target
        if f_lo <= 0 <= f_hi:
            break
        if f_lo > 0:
            lo -= hi - lo
        else:
            hi += hi - lo
    else:
        raise CalibrationError(f"could not bracket alpha* for MHR {target_mhr}")

    mid = 0.5 * (lo + hi)
    for i in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = fitted(mid) - target
        mhr_gap = abs(math.exp(f_mid + target) - target_mhr)
        if mhr_gap < tol / 10 or hi - lo < 1e-7:
            break
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    if abs(math.exp(fitted(mid)) - target_mhr) >= tol:
        raise CalibrationError(f"bisection for MHR {target_mhr} did not reach tol {tol}")
    log.info("calibrated alpha*=%.6f for MHR %.4g (%d bisection steps)", mid, target_mhr, i + 1)
    _memo[memo_key] = mid
    if cache_path is not None and seed == CALIBRATION_SEED:
        _append_cache(cache_path, key, mid, int(calib_n), float(tol))
    return mid


def calibrated_params(target_mhr: float, params: DgpParams = DgpParams(), **kw) -> DgpParams:
    a_star = calibrate_alpha_star(target_mhr, params, **kw)
    return replace(params, alpha_star=a_star, alpha=math.log(target_mhr))

"""Logistic regression by iteratively reweighted least squares."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

SEPARATION_THRESHOLD = 30.0


class SeparationError(RuntimeError):
    """Raised when a coefficient diverges, indicating (quasi-)complete separation."""


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class GlmFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    max_abs_score: float

    def predict(self, design: np.ndarray) -> np.ndarray:
        return expit(design @ self.coefficients)


def expit(eta: np.ndarray) -> np.ndarray:
    # Split by sign so neither branch overflows.
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _loglik(y: np.ndarray, eta: np.ndarray) -> float:
    # sum y*eta - log(1 + e^eta), written with logaddexp for stability
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logistic_irls(
    design: np.ndarray,
    response: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> GlmFit:
    """Maximum-likelihood logistic regression (logit link) fitted by IRLS.

    Newton steps are halved whenever the log-likelihood decreases.
    Convergence is declared when the sup-norm of the score falls below
    ``tol``. Non-convergence after ``max_iter`` steps is reported through
    ``GlmFit.converged`` and a warning rather than raised.

    Raises
    ------
    RankDeficientError
        If ``design`` does not have full column rank or has fewer rows than
        columns.
    SeparationError
        If any coefficient exceeds 30 in magnitude.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("design must be n x p and response length n")
    n, p = X.shape
    if n < p:
        raise RankDeficientError(f"need n >= p, got n={n}, p={p}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("response must be binary {0, 1}")
    if np.linalg.matrix_rank(X) < p:
        raise RankDeficientError("design matrix is rank deficient")

    beta = np.zeros(p)
    eta = X @ beta
    ll = _loglik(y, eta)
    score = X.T @ (y - expit(eta))
    max_score = float(np.max(np.abs(score)))
    it = 0
    while max_score >= tol and it < max_iter:
        it += 1
        mu = expit(eta)
        wt = mu * (1.0 - mu)
        info = X.T @ (X * wt[:, None])
        step = np.linalg.solve(info, score)
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            eta_c = X @ cand
            ll_c = _loglik(y, eta_c)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, eta, ll = cand, eta_c, ll_c
        if np.max(np.abs(beta)) > SEPARATION_THRESHOLD:
            raise SeparationError(
                f"coefficient magnitude {np.max(np.abs(beta)):.1f} exceeds "
                f"{SEPARATION_THRESHOLD}; data look separated"
            )
        score = X.T @ (y - expit(eta))
        max_score = float(np.max(np.abs(score)))

    converged = max_score < tol
    if not converged:
        warnings.warn(
            f"IRLS did not converge in {max_iter} iterations "
            f"(max |score| = {max_score:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return GlmFit(beta, converged, it, max_score)

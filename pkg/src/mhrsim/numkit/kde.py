"""Univariate Gaussian kernel density estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def silverman_bandwidth(sample: np.ndarray) -> float:
    """Silverman's rule of thumb, ``0.9 * min(sd, IQR / 1.34) * n^(-1/5)``."""
    x = np.asarray(sample, dtype=float)
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        # IQR collapses for heavily tied samples; fall back to sd alone
        spread = sd
    return float(0.9 * spread * x.size ** (-0.2))


@dataclass(frozen=True)
class GaussianKDE:
    sample: np.ndarray
    bandwidth: float

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        out = np.empty(pts.shape)
        # chunk to keep the (points x sample) block small
        step = max(1, 4_000_000 // self.sample.size)
        for i in range(0, pts.size, step):
            u = (pts[i : i + step, None] - self.sample[None, :]) / self.bandwidth
            out[i : i + step] = np.exp(-0.5 * u * u).sum(axis=1)
        return out * (_INV_SQRT_2PI / (self.sample.size * self.bandwidth))

    @property
    def support(self) -> tuple[float, float]:
        """Range beyond which the density is negligible (five bandwidths out)."""
        return (
            float(self.sample.min() - 5 * self.bandwidth),
            float(self.sample.max() + 5 * self.bandwidth),
        )


def kde_gaussian(sample, bandwidth: float | None = None) -> GaussianKDE:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two observations")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    if np.ptp(x) == 0:
        raise ValueError("sample has zero variance")
    bw = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not bw > 0:
        raise ValueError("bandwidth must be positive")
    return GaussianKDE(x, bw)

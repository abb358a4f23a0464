from .kde import GaussianKDE, kde_gaussian, silverman_bandwidth
from .logistic import GlmFit, RankDeficientError, SeparationError, expit, logistic_irls
from .rng import RngStream, rng_stream
from .roots import BracketError, brent_root
from .special import lower_inc_gamma

__all__ = [
    "BracketError",
    "GaussianKDE",
    "GlmFit",
    "RankDeficientError",
    "RngStream",
    "SeparationError",
    "brent_root",
    "expit",
    "kde_gaussian",
    "logistic_irls",
    "lower_inc_gamma",
    "rng_stream",
    "silverman_bandwidth",
]

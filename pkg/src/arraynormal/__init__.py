"""Array normal distributions with separable (Tucker product) covariance."""

__version__ = "0.1.0"

from .tensor import (fold, inner, kmode_product, norm2, slice_mode, stack, tucker_product,
                     unfold, unvec, vec)
from .linalg import NotPositiveDefiniteError, SpdMatrix, make_rng, spawn_rngs
from .distribution import (ArrayNormal, SeparableCovariance, condition_mode, covariance_vec,
                           log_density, push_mode, replicate, sample)
from .mle import MleConfig, MleResult, fit_mle
from .bayes import Chain, GibbsConfig, PriorSpec, SamplerError, run_gibbs
from .diagnostics import PpcReport, correlation_summary, ess, ppc, t_stat

__all__ = [
    "vec", "unvec", "unfold", "fold", "kmode_product", "tucker_product", "inner", "norm2",
    "stack", "slice_mode", "NotPositiveDefiniteError", "SpdMatrix", "make_rng", "spawn_rngs",
    "ArrayNormal", "SeparableCovariance", "condition_mode", "covariance_vec", "log_density",
    "push_mode", "replicate", "sample", "MleConfig", "MleResult", "fit_mle", "Chain",
    "GibbsConfig", "PriorSpec", "SamplerError", "run_gibbs", "PpcReport",
    "correlation_summary", "ess", "ppc", "t_stat",
]

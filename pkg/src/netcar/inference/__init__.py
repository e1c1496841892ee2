"""Models A-G, the MCMC sampler and model-comparison criteria."""
from .criteria import dic, posterior_mean_rates, quantile_classes, rate_quantile_classes, waic
from .diagnostics import effective_sample_size, monte_carlo_se
from .model import (
    MODEL_IDS,
    FixedEffectsDesign,
    GaussianLikelihood,
    HyperpriorConfig,
    LatentState,
    ModelError,
    ModelSpec,
    NullLikelihood,
    PoissonCARModel,
    PoissonLikelihood,
    build_model,
    model_spec,
    scale_covariates,
)
from .sampler import ChainConfig, PosteriorChains, run_mcmc

__all__ = [
    "MODEL_IDS", "ChainConfig", "FixedEffectsDesign", "GaussianLikelihood", "HyperpriorConfig",
    "LatentState", "ModelError", "ModelSpec", "NullLikelihood", "PoissonCARModel", "PoissonLikelihood",
    "PosteriorChains", "build_model", "dic", "effective_sample_size", "model_spec", "monte_carlo_se",
    "posterior_mean_rates", "quantile_classes", "rate_quantile_classes", "run_mcmc", "scale_covariates", "waic",
]

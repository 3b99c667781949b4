"""Bootstrap distribution forecasts from predictive residuals."""

from .baselines import baseline_fm, baseline_fr, in_sample_collection
from .core import (
    BootstrapConfig,
    RatioSet,
    bootstrap_additive,
    bootstrap_multiplicative,
    build_ratio_set,
    quantile,
    quantile_shortcut_direct,
)
from .forecast import (
    DistributionForecast,
    bagging_pf,
    forecast_direct,
    forecast_distribution,
    forecast_iterative,
)

__all__ = [
    "BootstrapConfig",
    "DistributionForecast",
    "RatioSet",
    "bagging_pf",
    "baseline_fm",
    "baseline_fr",
    "bootstrap_additive",
    "bootstrap_multiplicative",
    "build_ratio_set",
    "forecast_direct",
    "forecast_distribution",
    "forecast_iterative",
    "in_sample_collection",
    "quantile",
    "quantile_shortcut_direct",
]

"""Distribution forecasts from any point forecaster via backtest residuals and bootstrap."""

from .backtest import BacktestPlan, CovariatePerturbation, ResidualCollection, run_backtest
from .bootstrap import BootstrapConfig, DistributionForecast, forecast_distribution
from .dataset import Panel, PanelSchema, Series, load_panel, panel_from_arrays, save_panel
from .forecasters import (
    ARForecaster,
    ExternalForecaster,
    OffsetForecaster,
    RidgeForecaster,
    SeasonalNaiveForecaster,
)
from .pipeline import BacktestBootstrapForecaster, TrainedDFModel, forecast, train
from .selector import IdentitySelector, RuleSelector, TreeSelector, make_selector

__version__ = "0.1.0"

__all__ = [
    "BacktestPlan", "CovariatePerturbation", "ResidualCollection", "run_backtest",
    "BootstrapConfig", "DistributionForecast", "forecast_distribution",
    "Panel", "PanelSchema", "Series", "load_panel", "panel_from_arrays", "save_panel",
    "ARForecaster", "ExternalForecaster", "OffsetForecaster", "RidgeForecaster",
    "SeasonalNaiveForecaster", "BacktestBootstrapForecaster", "TrainedDFModel", "forecast",
    "train", "IdentitySelector", "RuleSelector", "TreeSelector", "make_selector",
]

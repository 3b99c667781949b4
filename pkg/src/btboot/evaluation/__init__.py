"""Metrics, synthetic oracle panels and the nested evaluation harness."""

from .harness import EvalPlan, EvalReport, MethodSpec, fold_artifacts, fold_points, run_evaluation, standard_method
from .metrics import ace, coverage, mape, pinball
from .synthetic import SyntheticData, SyntheticOracle, SyntheticSpec, generate_synthetic

__all__ = [
    "EvalPlan", "EvalReport", "MethodSpec", "fold_artifacts", "fold_points", "run_evaluation",
    "standard_method", "ace", "coverage", "mape", "pinball", "SyntheticData", "SyntheticOracle",
    "SyntheticSpec", "generate_synthetic",
]

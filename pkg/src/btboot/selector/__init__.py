"""Residual selection and dependence diagnostics."""

from .diagnostics import DependenceReport, dependence_report, selector_sanity_check
from .selectors import (
    BaseSelector,
    IdentitySelector,
    Predicate,
    RuleSelector,
    Selection,
    TreeSelector,
    make_selector,
    parse_rule,
    selector_from_dict,
)
from .stats import distance_correlation, kolmogorov_sf, ks_two_sample
from .tree import RegressionTree

__all__ = [
    "BaseSelector",
    "DependenceReport",
    "IdentitySelector",
    "Predicate",
    "RegressionTree",
    "RuleSelector",
    "Selection",
    "TreeSelector",
    "dependence_report",
    "distance_correlation",
    "kolmogorov_sf",
    "ks_two_sample",
    "make_selector",
    "parse_rule",
    "selector_from_dict",
    "selector_sanity_check",
]

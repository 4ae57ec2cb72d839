"""Estimators for Q, item parameters and the attribute distribution."""

from .params import ParamFit, estimate_p, fit_item_params
from .search import (
    DEFAULT_BUDGET,
    FitResult,
    SearchConstraints,
    anchored_search,
    enumerate_candidates,
    exhaustive_search,
    search_q,
)
from .split import align_columns, group_layout, split_merge
from .validate import ValidationReport, validate_q

__all__ = [
    "DEFAULT_BUDGET", "FitResult", "ParamFit", "SearchConstraints", "ValidationReport",
    "align_columns", "anchored_search", "enumerate_candidates", "estimate_p", "exhaustive_search",
    "fit_item_params", "group_layout", "search_q", "split_merge", "validate_q",
]

"""GeoShapley explanations and coefficient-surface smoothing."""

from .core import (
    MAX_EXACT_PLAYERS,
    GeoShapleyExplanation,
    PlayerPartition,
    SingularDesignError,
    ValueFunction,
    explain_exact,
    explain_sampled,
    sample_background,
    shapley_from_values,
    value_function,
)
from .export import EXPLAIN_HEADER, save_explanation
from .smooth import SmoothResult, bandwidth_grid, gwr_fit, svc_smooth

__all__ = [
    "MAX_EXACT_PLAYERS",
    "GeoShapleyExplanation",
    "PlayerPartition",
    "SingularDesignError",
    "ValueFunction",
    "explain_exact",
    "explain_sampled",
    "sample_background",
    "shapley_from_values",
    "value_function",
    "EXPLAIN_HEADER",
    "save_explanation",
    "SmoothResult",
    "bandwidth_grid",
    "gwr_fit",
    "svc_smooth",
]

"""Regression models with a shared fit/predict contract, and cross-validation."""

from .base import FeatureBundle, PredictorModel, dump_model, load_model
from .cv import CVResult, ModelSpec, ZeroVarianceFoldError, cross_validate, expand_grid, r2_score, select_hp
from .linear import (
    ESFModel,
    ESFSVCModel,
    LinearModel,
    MeanModel,
    RankDeficientError,
    fit_esf,
    fit_esf_svc,
    fit_ols,
    ols_solve,
    shared_subsets,
)
from .trees import TreeEnsemble, fit_tree, fit_tree_ensemble, validate_tree_hp

__all__ = [
    "FeatureBundle",
    "PredictorModel",
    "dump_model",
    "load_model",
    "CVResult",
    "ModelSpec",
    "cross_validate",
    "expand_grid",
    "r2_score",
    "select_hp",
    "ZeroVarianceFoldError",
    "ESFModel",
    "ESFSVCModel",
    "LinearModel",
    "MeanModel",
    "RankDeficientError",
    "fit_esf",
    "fit_esf_svc",
    "fit_ols",
    "ols_solve",
    "shared_subsets",
    "TreeEnsemble",
    "fit_tree",
    "fit_tree_ensemble",
    "validate_tree_hp",
]

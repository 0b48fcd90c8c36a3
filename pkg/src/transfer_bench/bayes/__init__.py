"""Hierarchical Bayesian combination of transferability scorers."""

from .diagnostics import DiagnosticsReport, diagnose, ess_bulk, split_rhat
from .infer import (
    PosteriorDraws,
    Prediction,
    calibrate_loo,
    loo_all,
    predict,
    sample,
    save_draws_csv,
)
from .model import HierarchicalModel, ModelSpec, ParamLayout

__all__ = [
    "DiagnosticsReport",
    "HierarchicalModel",
    "ModelSpec",
    "ParamLayout",
    "PosteriorDraws",
    "Prediction",
    "calibrate_loo",
    "diagnose",
    "ess_bulk",
    "loo_all",
    "predict",
    "sample",
    "save_draws_csv",
    "split_rhat",
]

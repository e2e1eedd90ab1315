"""Variational Bayesian detection of multiple change-points.

The main entry points are :class:`MichConfig` to describe a model,
:func:`detect_changes` to fit it and summarize the detections, and the
single change-point posteriors in :mod:`mich.scp`.
"""

from __future__ import annotations

from .engine import MichConfig, MichFit, estimate_precision, fit_model
from .errors import (
    DataError,
    DegenerateWeightsError,
    DomainError,
    EstimatorFailure,
    MichError,
    NumericalFailure,
)
from .postprocess import ChangeReport, auto_select, credible_set, detect_changes, merge_duplicates, summarize
from .priors import make_prior
from .scp import mean_scp, meanvar_scp, poisson_scp, var_scp

__all__ = [
    "MichConfig",
    "MichFit",
    "ChangeReport",
    "fit_model",
    "detect_changes",
    "auto_select",
    "merge_duplicates",
    "summarize",
    "credible_set",
    "estimate_precision",
    "make_prior",
    "mean_scp",
    "var_scp",
    "meanvar_scp",
    "poisson_scp",
    "MichError",
    "DomainError",
    "DataError",
    "DegenerateWeightsError",
    "NumericalFailure",
    "EstimatorFailure",
]

__version__ = "0.1.0"

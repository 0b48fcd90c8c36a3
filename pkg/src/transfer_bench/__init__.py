"""Transferability scoring, benchmarking, and Bayesian scorer combination.

The package has four layers: domain types and file ingestion
(:mod:`transfer_bench.data`), rank-correlation statistics with a
stratified bootstrap (:mod:`transfer_bench.ranking`), feature-based
transferability scorers (:mod:`transfer_bench.scorers`), and a
three-level hierarchical Bayesian model that combines scorers into
posterior-predictive rankings (:mod:`transfer_bench.bayes`).  The
``transfer-bench`` command line ties them into batch workflows.
"""

from . import bayes
from .data import (
    FeatureSet,
    GroupedSeries,
    GroupStats,
    TransferTuple,
    TupleTable,
    group_by_dataset,
    load_features,
    load_tuples,
    save_features,
    save_tuples,
    z_normalize,
)
from .errors import (
    FormatError,
    InputError,
    NormalizationError,
    ParseError,
    SamplingError,
    StatisticsError,
    TransferBenchError,
    ValidationError,
)
from .ranking import (
    STATISTICS,
    BootstrapSummary,
    TauResult,
    aggregated_weighted_tau,
    averaged_weighted_tau,
    bootstrap,
    kendall_tau,
    pearson_r,
    weighted_tau,
)
from .scorers import SCORERS, ScoreRecord, score_all

__version__ = "0.1.0"

__all__ = [
    "FeatureSet",
    "GroupedSeries",
    "GroupStats",
    "TransferTuple",
    "TupleTable",
    "group_by_dataset",
    "load_features",
    "load_tuples",
    "save_features",
    "save_tuples",
    "z_normalize",
    "STATISTICS",
    "BootstrapSummary",
    "TauResult",
    "aggregated_weighted_tau",
    "averaged_weighted_tau",
    "bootstrap",
    "kendall_tau",
    "pearson_r",
    "weighted_tau",
    "SCORERS",
    "ScoreRecord",
    "score_all",
    "bayes",
    "TransferBenchError",
    "InputError",
    "ParseError",
    "FormatError",
    "ValidationError",
    "NormalizationError",
    "StatisticsError",
    "SamplingError",
]

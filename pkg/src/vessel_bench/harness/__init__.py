"""Splits, shuffled evaluation, adaptation protocol, reports and experiment grids."""

from .cache import FeatureCache, feature_cache
from .dataset import LabeledDataset, load_dataset
from .evaluation import (
    AdaptationResult,
    RunRecord,
    ShuffleSummary,
    run_adaptation,
    run_shuffles,
)
from .experiment import load_config, run_experiment
from .methods import MethodSpec, Subset, run_method
from .report import ExperimentReport, format_accuracy, format_delta, parse_runs_csv, render_report
from .splits import STANDARD_FRACTIONS, Split, SplitSpec, make_split, split_label

__all__ = [
    "AdaptationResult",
    "ExperimentReport",
    "FeatureCache",
    "LabeledDataset",
    "MethodSpec",
    "STANDARD_FRACTIONS",
    "RunRecord",
    "ShuffleSummary",
    "Split",
    "SplitSpec",
    "Subset",
    "feature_cache",
    "format_accuracy",
    "format_delta",
    "load_config",
    "load_dataset",
    "make_split",
    "parse_runs_csv",
    "render_report",
    "run_adaptation",
    "run_experiment",
    "run_method",
    "run_shuffles",
    "split_label",
]

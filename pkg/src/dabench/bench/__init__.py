"""Benchmark harness: nested cross-validation over DA methods and scorers."""

from .config import BenchConfig, TrialRecord, load_config, read_records, write_records
from .methods import METHOD_REGISTRY, expand_grid, get_method
from .results import (build_table, render_results, scorer_analysis,
                      scorer_analysis_report, select_best_scorer)
from .runner import run_nested_cv

__all__ = [
    "BenchConfig",
    "TrialRecord",
    "load_config",
    "read_records",
    "write_records",
    "METHOD_REGISTRY",
    "expand_grid",
    "get_method",
    "run_nested_cv",
    "render_results",
    "build_table",
    "scorer_analysis_report",
    "scorer_analysis",
    "select_best_scorer",
]

"""Exact desk-scale computations for martingale inequalities, rough-path
integration, and Ito sums on finite filtered spaces."""

from .report import CheckReport, CorpusSpec
from .tree import (
    INFINITY,
    FiltrationTree,
    Martingale,
    StoppingRule,
    TreeError,
    TreeProcess,
    conditional_expectation,
    hitting_time,
    load_tree,
    optional_sampling_check,
    save_tree,
    stop_process,
)

__all__ = [
    "INFINITY",
    "CheckReport",
    "CorpusSpec",
    "FiltrationTree",
    "Martingale",
    "StoppingRule",
    "TreeError",
    "TreeProcess",
    "conditional_expectation",
    "hitting_time",
    "load_tree",
    "optional_sampling_check",
    "save_tree",
    "stop_process",
]

__version__ = "0.1.0"

"""Interventional robustness and disentanglement scores for learned codes."""

__version__ = "0.1.0"

from .baselines import MiReport, mi_disentanglement, mi_matrix, mi_report
from .data_model import DiscretizationPlan, LabeledDataset, ingest, is_fully_crossed, load_dataset
from .errors import EnumerationBudgetError, EstimationError, IrsError, ValidationError
from .irs_core import (
    IrsConfig,
    IrsReport,
    crossed_fast_path,
    dependency_matrix,
    disentanglement_score,
    domain_shift_score,
    empida,
    interventional_mean,
    irs,
    pida,
)
from .partitioner import IndexSpec, build_frequencies, build_partition

__all__ = [
    "DiscretizationPlan",
    "EnumerationBudgetError",
    "EstimationError",
    "IndexSpec",
    "IrsConfig",
    "IrsError",
    "IrsReport",
    "LabeledDataset",
    "MiReport",
    "ValidationError",
    "build_frequencies",
    "build_partition",
    "crossed_fast_path",
    "dependency_matrix",
    "disentanglement_score",
    "domain_shift_score",
    "empida",
    "ingest",
    "interventional_mean",
    "irs",
    "is_fully_crossed",
    "load_dataset",
    "mi_disentanglement",
    "mi_matrix",
    "mi_report",
    "pida",
]

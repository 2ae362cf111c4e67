"""Aggregation, fusion, metrics and reports."""

from .metrics import (
    FUSE_MODES,
    ICBHI_TASKS,
    TASK1_CLASSES,
    TASK2_CLASSES,
    accuracy,
    aggregate_by_owner,
    aggregate_patches,
    confusion_matrix,
    evaluate_hierarchy,
    fuse,
    icbhi_metrics,
    predict_label,
)
from .report import MetricsReport, build_report, early_curve, round_half_up, write_report

__all__ = [
    "FUSE_MODES", "ICBHI_TASKS", "TASK1_CLASSES", "TASK2_CLASSES", "accuracy", "aggregate_by_owner",
    "aggregate_patches", "confusion_matrix", "evaluate_hierarchy", "fuse", "icbhi_metrics",
    "predict_label", "MetricsReport", "build_report", "early_curve", "round_half_up", "write_report",
]

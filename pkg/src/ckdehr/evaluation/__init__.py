"""Metrics, the inference benchmark and the ablation harness."""

from .metrics import (MetricReport, PredictionSet, UndefinedMetricError, accuracy, aupr, auroc,
                      confusion_per_label, evaluate, macro_f1)

__all__ = [
    "MetricReport", "PredictionSet", "UndefinedMetricError", "accuracy", "aupr", "auroc",
    "confusion_per_label", "evaluate", "macro_f1",
]

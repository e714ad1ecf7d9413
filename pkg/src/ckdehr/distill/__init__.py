"""Losses, soft-label strategies and the teacher/student training loops."""

from .data import Dataset
from .losses import LossConfig, LossConfigError, bce_with_logits, total_loss
from .soft_labels import (STRATEGIES, MissingSplitError, SoftLabelConfigError, read_soft_labels,
                          soft_labels_avg_prob, soft_labels_mlaph, soft_labels_single_cls, write_soft_labels)
from .training import (TrainConfig, TrainingDiverged, TrainingHistory, distill_student, finetune_teacher,
                       predict_logits, predict_proba, pretrain_masked_tokens)

__all__ = [
    "Dataset", "LossConfig", "LossConfigError", "MissingSplitError", "STRATEGIES", "SoftLabelConfigError",
    "TrainConfig", "TrainingDiverged", "TrainingHistory", "bce_with_logits", "distill_student",
    "finetune_teacher", "predict_logits", "predict_proba", "pretrain_masked_tokens", "read_soft_labels",
    "soft_labels_avg_prob", "soft_labels_mlaph", "soft_labels_single_cls", "total_loss", "write_soft_labels",
]

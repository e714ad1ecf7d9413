"""Three ways of turning a teacher into per-label soft targets.

* ``mlaph``: sigmoid of the label-head logits (the default);
* ``avg-prob``: vocabulary softmax at the prediction position, averaged over
  each label's name tokens, then min-max rescaled per sample;
* ``single-cls-prob``: a teacher re-tuned on one-label-per-row copies of the
  data, read out through a softmax over 25 labels plus a reserved "none" class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..models.encoder import EncoderModel
from .data import Dataset
from .training import TrainConfig, TrainingHistory, _run_epochs, predict_logits

STRATEGIES = ("mlaph", "avg-prob", "single-cls-prob")
AVG_PROB_EPS = 1e-4
SINGLE_CLS_EPS = 1e-6
NONE_CLASS = 25


class SoftLabelConfigError(ValueError):
    pass


class MissingSplitError(RuntimeError):
    pass


def soft_labels_mlaph(teacher: EncoderModel, data: Dataset, batch_size: int = 64) -> np.ndarray:
    return T.sigmoid_array(predict_logits(teacher, data, batch_size))


def label_token_average(probs: np.ndarray, label_token_ids: list[list[int]]) -> np.ndarray:
    """Mean vocabulary probability over each label's token ids, before rescaling."""
    for i, ids in enumerate(label_token_ids):
        if not ids:
            raise SoftLabelConfigError(f"label {i} has an empty token-id set")
    return np.stack([probs[:, ids].mean(axis=1) for ids in label_token_ids], axis=1)


def minmax_rescale(scores: np.ndarray, eps: float = AVG_PROB_EPS) -> np.ndarray:
    """Map each row affinely into [eps, 1 - eps], preserving order; flat rows go to 0.5."""
    lo = scores.min(axis=1, keepdims=True)
    span = scores.max(axis=1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    unit = np.where(span > 0, (scores - lo) / safe, 0.5)
    return eps + (1.0 - 2.0 * eps) * unit


def soft_labels_avg_prob(teacher: EncoderModel, data: Dataset, label_token_ids: list[list[int]],
                         batch_size: int = 64, rescale: bool = True) -> np.ndarray:
    """Label scores read off the vocabulary distribution at the last real token."""
    for i, ids in enumerate(label_token_ids):
        if not ids:
            raise SoftLabelConfigError(f"label {i} has an empty token-id set")
    out = []
    for idx in data.batches(batch_size):
        ids, mask = data.batch(idx)
        logits = teacher.vocab_logits(ids, mask).data
        last = mask.shape[1] - 1 - np.argmax(mask[:, ::-1], axis=1)
        probs = T.softmax_array(logits[np.arange(len(idx)), last])
        out.append(label_token_average(probs, label_token_ids))
    scores = np.concatenate(out)
    return minmax_rescale(scores) if rescale else scores


@dataclass
class SingleLabelSplit:
    rows: np.ndarray      # index into the source dataset
    classes: np.ndarray   # label index, or NONE_CLASS for samples without positives


def split_single_label(labels: np.ndarray) -> SingleLabelSplit:
    """One row per positive label; samples with no positive get one NONE_CLASS row."""
    rows, classes = [], []
    for i, y in enumerate(np.asarray(labels)):
        pos = np.flatnonzero(y > 0.5)
        if pos.size == 0:
            rows.append(i)
            classes.append(NONE_CLASS)
        else:
            rows.extend([i] * pos.size)
            classes.extend(pos.tolist())
    return SingleLabelSplit(np.array(rows, dtype=np.int64), np.array(classes, dtype=np.int64))


def finetune_single_cls_teacher(base: EncoderModel, data: Dataset, cfg: TrainConfig,
                                lora_rank: int | None = None) -> tuple[EncoderModel, TrainingHistory]:
    """Copy ``base``, give it fresh adapters and a 26-way head, and tune it with softmax cross-entropy."""
    model = base.copy()
    for lin in (l for layer in model.layers for l in (layer.q, layer.k, layer.v)):
        lin.lora = None
    model.replace_head(NONE_CLASS + 1, cfg.seed)
    model.attach_lora(lora_rank or base.config.lora_rank or 4, cfg.seed + 1)
    split = split_single_label(data.labels)
    expanded = data.subset(split.rows)

    def batch_loss(idx):
        ids, mask = expanded.batch(idx)
        return T.cross_entropy(model.label_logits(ids, mask), split.classes[idx]), (None, None)

    history = _run_epochs(model, expanded, cfg, batch_loss, "single-cls-teacher")
    return model, history


def soft_labels_single_cls(single_teacher: EncoderModel | None, data: Dataset, batch_size: int = 64) -> np.ndarray:
    if single_teacher is None:
        raise MissingSplitError("single-cls-prob needs a teacher tuned on the single-label split")
    if single_teacher.config.num_labels != NONE_CLASS + 1:
        raise MissingSplitError("teacher head is not the 26-way single-label head")
    logits = predict_logits(single_teacher, data, batch_size)
    probs = T.softmax_array(logits)[:, :NONE_CLASS]
    return np.clip(probs, SINGLE_CLS_EPS, 1.0 - SINGLE_CLS_EPS)


def write_soft_labels(path, sample_ids, y1: np.ndarray) -> None:
    """JSON-lines cache, one ``{"sample_id", "y1"}`` object per row; floats are written round-trippably."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sid, row in zip(sample_ids, np.asarray(y1)):
            fh.write(json.dumps({"sample_id": sid, "y1": [float(v) for v in row]}) + "\n")


def read_soft_labels(path, sample_ids=None) -> np.ndarray:
    """Load a cache; with ``sample_ids`` the rows are returned in that order."""
    rows = {}
    order = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                o = json.loads(line)
                rows[o["sample_id"]] = o["y1"]
                order.append(o["sample_id"])
    wanted = order if sample_ids is None else list(sample_ids)
    missing = [s for s in wanted if s not in rows]
    if missing:
        raise MissingSplitError(f"soft-label cache lacks {len(missing)} samples, e.g. {missing[0]}")
    return np.array([rows[s] for s in wanted], dtype=np.float64).reshape(len(wanted), -1)

"""Multi-label metrics at a fixed decision threshold.

Accuracy is micro over all (sample, label) cells. F1, AUROC and AUPR are
computed per label and macro-averaged; labels without both a positive and a
negative are left out of AUROC/AUPR and listed in ``excluded``. A label with
no predicted and no actual positives scores F1 = 0.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

AGGREGATION_NOTE = ("acc=micro over sample x label cells; f1=macro over labels (0 when a label has "
                    "no predicted and no true positives); auroc/aupr=macro over labels with both classes")


class UndefinedMetricError(ValueError):
    pass


@dataclass
class PredictionSet:
    scores: np.ndarray
    truths: np.ndarray
    threshold: float = 0.5

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.truths = np.asarray(self.truths).astype(np.int64)
        if self.scores.shape != self.truths.shape or self.scores.ndim != 2:
            raise ValueError(f"scores {self.scores.shape} and truths {self.truths.shape} must be equal 2-D shapes")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if not np.isin(self.truths, (0, 1)).all():
            raise ValueError("truths must be binary")

    @property
    def predicted(self) -> np.ndarray:
        return (self.scores >= self.threshold).astype(np.int64)

    @property
    def n_samples(self) -> int:
        return self.scores.shape[0]


def _nonempty(p: PredictionSet) -> None:
    if p.n_samples == 0:
        raise ValueError("prediction set is empty")


def accuracy(p: PredictionSet) -> float:
    _nonempty(p)
    return float(np.mean(p.predicted == p.truths))


def confusion_per_label(p: PredictionSet) -> np.ndarray:
    """Array of shape [labels, 4] holding (tn, fp, fn, tp)."""
    _nonempty(p)
    yhat, y = p.predicted, p.truths
    tp = np.sum((yhat == 1) & (y == 1), axis=0)
    fp = np.sum((yhat == 1) & (y == 0), axis=0)
    fn = np.sum((yhat == 0) & (y == 1), axis=0)
    tn = np.sum((yhat == 0) & (y == 0), axis=0)
    return np.stack([tn, fp, fn, tp], axis=1)


def per_label_f1(p: PredictionSet) -> np.ndarray:
    c = confusion_per_label(p)
    tp, fp, fn = c[:, 3], c[:, 1], c[:, 2]
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1), 0.0)


def macro_f1(p: PredictionSet) -> float:
    return float(np.mean(per_label_f1(p)))


def _valid_labels(truths: np.ndarray) -> np.ndarray:
    pos = truths.sum(axis=0)
    return (pos > 0) & (pos < truths.shape[0])


def auroc_single(scores: np.ndarray, truth: np.ndarray) -> float:
    """Mann-Whitney form: P(score_pos > score_neg) with ties worth one half."""
    ranks = rankdata(scores, method="average")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    return float((ranks[truth == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def aupr_single(scores: np.ndarray, truth: np.ndarray) -> float:
    """Step-wise area: sum over descending unique thresholds of recall gain x precision."""
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], truth[order]
    n_pos = y.sum()
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = (last_of_group + 1) - tp
    precision = tp / (tp + fp)
    recall_gain = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(recall_gain * precision))


def _macro(fn, p: PredictionSet) -> tuple[float, np.ndarray, list[int]]:
    _nonempty(p)
    valid = _valid_labels(p.truths)
    if not valid.any():
        raise UndefinedMetricError("every label lacks either positives or negatives")
    per = np.full(p.scores.shape[1], np.nan)
    for j in np.flatnonzero(valid):
        per[j] = fn(p.scores[:, j], p.truths[:, j])
    return float(np.nanmean(per)), per, np.flatnonzero(~valid).tolist()


def auroc(p: PredictionSet) -> float:
    return _macro(auroc_single, p)[0]


def aupr(p: PredictionSet) -> float:
    return _macro(aupr_single, p)[0]


@dataclass
class LabelRow:
    name: str
    tn: int
    fp: int
    fn: int
    tp: int
    support: int
    f1: float
    auroc: float | None
    aupr: float | None


@dataclass
class MetricReport:
    acc: float
    macro_f1: float
    auroc: float
    aupr: float
    threshold: float
    n_samples: int
    per_label: list[LabelRow] = field(default_factory=list)
    excluded_labels: list[str] = field(default_factory=list)
    aggregation: str = AGGREGATION_NOTE

    def headline(self) -> dict[str, float]:
        return {"acc": self.acc, "f1": self.macro_f1, "auc": self.auroc, "aupr": self.aupr}

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    def to_table(self) -> str:
        lines = [f"# {self.aggregation}",
                 f"# n_samples={self.n_samples} threshold={self.threshold}",
                 f"ACC {self.acc:.4f}  Macro-F1 {self.macro_f1:.4f}  AUROC {self.auroc:.4f}  AUPR {self.aupr:.4f}",
                 ""]
        width = max(len(r.name) for r in self.per_label) if self.per_label else 10
        lines.append(f"{'label':<{width}}  {'tn':>5} {'fp':>5} {'fn':>5} {'tp':>5} {'f1':>7} {'auroc':>7} {'aupr':>7}")
        for r in self.per_label:
            au = "-" if r.auroc is None else f"{r.auroc:.4f}"
            ap = "-" if r.aupr is None else f"{r.aupr:.4f}"
            lines.append(f"{r.name:<{width}}  {r.tn:>5} {r.fp:>5} {r.fn:>5} {r.tp:>5} {r.f1:>7.4f} {au:>7} {ap:>7}")
        return "\n".join(lines) + "\n"

    def confusion_csv(self) -> str:
        rows = ["label,tn,fp,fn,tp"]
        rows += [f"\"{r.name}\",{r.tn},{r.fp},{r.fn},{r.tp}" for r in self.per_label]
        return "\n".join(rows) + "\n"


def evaluate(p: PredictionSet, label_names=None) -> MetricReport:
    names = list(label_names) if label_names is not None else [f"label_{j}" for j in range(p.scores.shape[1])]
    conf = confusion_per_label(p)
    f1 = per_label_f1(p)
    auc, auc_per, excluded = _macro(auroc_single, p)
    ap, ap_per, _ = _macro(aupr_single, p)
    rows = []
    for j, name in enumerate(names):
        tn, fp, fn, tp = (int(v) for v in conf[j])
        rows.append(LabelRow(name, tn, fp, fn, tp, tp + fn, float(f1[j]),
                             None if np.isnan(auc_per[j]) else float(auc_per[j]),
                             None if np.isnan(ap_per[j]) else float(ap_per[j])))
    return MetricReport(accuracy(p), float(np.mean(f1)), auc, ap, p.threshold, p.n_samples, rows,
                        [names[j] for j in excluded])

"""End-to-end stages shared by the CLI, the alpha sweep and the ablation harness."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .distill.data import Dataset
from .distill.losses import LossConfig
from .distill.soft_labels import (finetune_single_cls_teacher, soft_labels_avg_prob, soft_labels_mlaph,
                                  soft_labels_single_cls)
from .distill.training import (TrainConfig, TrainingHistory, distill_student, finetune_teacher,
                               predict_proba, pretrain_masked_tokens)
from .ehr import (EfficacyTable, FusedSample, PhenotypeRegistry, VisitRecord, build_visit_pairs,
                  default_registry, load_template, rank_efficacy, render_raw_sample, render_sample,
                  split_by_patient)
from .evaluation.metrics import MetricReport, PredictionSet, evaluate
from .models import EncoderConfig, EncoderModel, Vocabulary, fit_vocabulary
from .rng import derive

log = logging.getLogger(__name__)


@dataclass
class FusedCorpus:
    train: list[FusedSample]
    test: list[FusedSample]
    table: EfficacyTable
    fused: bool
    dropped_codes: dict[str, int]

    def input_hash(self) -> str:
        h = hashlib.sha256()
        for s in self.train + self.test:
            h.update(s.text.encode())
            h.update(b"\0")
        return h.hexdigest()


def fuse(records: list[VisitRecord], cfg: RunConfig, registry: PhenotypeRegistry | None = None,
         fused: bool = True, template: str | None = None) -> FusedCorpus:
    """Pairs, patient split, efficacy table on the training side, and rendering.

    With ``fused=False`` the efficacy clause is left out (raw visit text).
    """
    registry = registry or default_registry()
    pairs = build_visit_pairs(records)
    train_pairs, test_pairs = split_by_patient(pairs, cfg.test_fraction, cfg.seed)
    table = rank_efficacy(train_pairs, min_support=cfg.min_support)
    if fused:
        tpl = template or load_template("fused")
        render = lambda p: render_sample(p, table, registry, tpl, cfg.top_k)  # noqa: E731
    else:
        tpl = template or load_template("raw")
        render = lambda p: render_raw_sample(p, registry, tpl)  # noqa: E731
    train = [render(p) for p in train_pairs]
    test = [render(p) for p in test_pairs]
    dropped: dict[str, int] = {}
    for s in train + test:
        for code in s.dropped_codes:
            dropped[code] = dropped.get(code, 0) + 1
    return FusedCorpus(train, test, table, fused, dropped)


def build_vocab(samples: list[FusedSample], registry: PhenotypeRegistry | None = None) -> Vocabulary:
    registry = registry or default_registry()
    return fit_vocabulary([s.text for s in samples], extra=registry.names)


def model_config(cfg: RunConfig, role: str, vocab_size: int) -> EncoderConfig:
    spec = cfg.teacher if role == "teacher" else cfg.student
    return EncoderConfig(layers=spec.layers, heads=spec.heads, d_model=spec.d_model, d_ff=spec.d_ff,
                         max_seq_len=cfg.max_seq_len, vocab_size=vocab_size, pooling=cfg.pooling,
                         causal=cfg.causal, activation=cfg.activation)


@dataclass
class TeacherRun:
    model: EncoderModel
    pretrain: TrainingHistory
    finetune: TrainingHistory


def train_teacher(train: Dataset, vocab: Vocabulary, cfg: RunConfig) -> TeacherRun:
    """Masked-token warm start of the full encoder, then LoRA + head fine-tuning."""
    seed = derive(cfg.seed, "teacher")
    model = EncoderModel(model_config(cfg, "teacher", len(vocab)), seed)
    pre = pretrain_masked_tokens(model, train, TrainConfig(cfg.pretrain_epochs, cfg.batch_size,
                                                           cfg.pretrain_lr, derive(seed, "pretrain")))
    if cfg.rank:
        model.attach_lora(cfg.rank, seed)
    fin = finetune_teacher(model, train, TrainConfig(cfg.teacher_epochs, cfg.batch_size, cfg.teacher_lr,
                                                     derive(seed, "finetune")))
    return TeacherRun(model, pre, fin)


def extract_soft_labels(teacher: EncoderModel, train: Dataset, vocab: Vocabulary, cfg: RunConfig,
                        registry: PhenotypeRegistry | None = None) -> np.ndarray:
    registry = registry or default_registry()
    if cfg.strategy == "mlaph":
        return soft_labels_mlaph(teacher, train)
    if cfg.strategy == "avg-prob":
        return soft_labels_avg_prob(teacher, train, vocab.label_token_ids(registry.names))
    single, _ = finetune_single_cls_teacher(
        teacher, train, TrainConfig(cfg.teacher_epochs, cfg.batch_size, cfg.teacher_lr,
                                    derive(cfg.seed, "single-cls")), cfg.rank or None)
    return soft_labels_single_cls(single, train)


def train_student(train: Dataset, soft: np.ndarray | None, vocab_size: int, cfg: RunConfig,
                  alpha: float | None = None, seed: int | None = None) -> tuple[EncoderModel, TrainingHistory]:
    seed = derive(cfg.seed if seed is None else seed, "student")
    student = EncoderModel(model_config(cfg, "student", vocab_size), seed)
    loss_cfg = LossConfig(alpha=cfg.alpha if alpha is None else alpha, temperature=cfg.temperature)
    hist = distill_student(student, train, soft, loss_cfg,
                           TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, derive(seed, "train")))
    return student, hist


def evaluate_model(model: EncoderModel, data: Dataset, registry: PhenotypeRegistry | None = None,
                   threshold: float = 0.5) -> MetricReport:
    registry = registry or default_registry()
    return evaluate(PredictionSet(predict_proba(model, data), data.labels, threshold), registry.names)


SWEEP_COLUMNS = ("alpha", "acc", "f1", "auc", "aupr")


def alpha_sweep(train: Dataset, test: Dataset, soft: np.ndarray | None, vocab_size: int, cfg: RunConfig,
                values=None, registry: PhenotypeRegistry | None = None) -> list[dict[str, float]]:
    """One student per alpha against a shared teacher's soft labels and a shared seed."""
    values = list(cfg.sweep_alphas if values is None else values)
    for a in values:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"sweep alpha {a} outside [0, 1]")
    rows = []
    for a in values:
        student, _ = train_student(train, soft, vocab_size, cfg, alpha=a)
        report = evaluate_model(student, test, registry)
        rows.append({"alpha": float(a), **report.headline()})
        log.info("alpha %.2f -> %s", a, report.headline())
    return rows


def sweep_table(rows: list[dict[str, float]]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        lines.append(",".join(f"{r[c]:.6f}" if c != "alpha" else f"{r[c]:g}" for c in SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"

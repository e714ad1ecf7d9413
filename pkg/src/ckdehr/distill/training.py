"""Teacher fine-tuning, optional base pretraining, and student distillation loops."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..models.encoder import ContractError, EncoderModel
from ..optim import Adam, DivergenceError
from ..rng import derive, make_rng
from ..tensor import NonFiniteError, Tape
from .data import Dataset
from .losses import LossConfig, total_loss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0


@dataclass
class EpochLog:
    epoch: int
    loss: float
    hard_loss: float | None = None
    soft_loss: float | None = None
    seconds: float = 0.0

    def to_dict(self) -> dict:
        d = {"epoch": self.epoch, "loss": self.loss}
        if self.hard_loss is not None:
            d["hard_loss"] = self.hard_loss
        if self.soft_loss is not None:
            d["soft_loss"] = self.soft_loss
        d["wall_clock_s"] = self.seconds
        return d


@dataclass
class TrainingHistory:
    epochs: list[EpochLog] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [e.loss for e in self.epochs]


class TrainingDiverged(DivergenceError):
    def __init__(self, message: str, last_good: dict[str, np.ndarray]):
        super().__init__(message)
        self.last_good = last_good


def _run_epochs(model: EncoderModel, data: Dataset, cfg: TrainConfig, batch_loss, label: str) -> TrainingHistory:
    opt = Adam(model.trainable_parameters(), lr=cfg.lr)
    rng = make_rng(derive(cfg.seed, f"{label}-shuffle"))
    history = TrainingHistory()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        snapshot = model.state_dict()
        sums = np.zeros(3)
        n = 0
        try:
            for idx in data.batches(cfg.batch_size, rng):
                opt.zero_grad()
                with Tape() as tape:
                    loss, parts = batch_loss(idx)
                    tape.backward(loss)
                opt.step()
                k = len(idx)
                sums += k * np.array([loss.item(), *(np.nan if p is None else p for p in parts)])
                n += k
        except (NonFiniteError, DivergenceError) as exc:
            model.load_state_dict(snapshot)
            raise TrainingDiverged(f"{label} diverged in epoch {epoch + 1}: {exc}", snapshot) from exc
        mean = sums / max(n, 1)
        entry = EpochLog(epoch + 1, float(mean[0]),
                         None if np.isnan(mean[1]) else float(mean[1]),
                         None if np.isnan(mean[2]) else float(mean[2]),
                         time.perf_counter() - t0)
        history.epochs.append(entry)
        log.info("%s epoch %d loss %.5f", label, entry.epoch, entry.loss)
    return history


def finetune_teacher(teacher: EncoderModel, data: Dataset, cfg: TrainConfig) -> TrainingHistory:
    """Supervised fine-tuning of the adapters and label head against hard labels.

    Only parameters flagged trainable move; with LoRA attached that is the
    Q/K/V adapters and the head.
    """
    if not teacher.adapters():
        log.warning("teacher has no LoRA adapters; all trainable parameters will be updated")

    def batch_loss(idx):
        ids, mask = data.batch(idx)
        loss = T.bce_with_logits(teacher.label_logits(ids, mask), data.labels[idx])
        return loss, (None, None)

    return _run_epochs(teacher, data, cfg, batch_loss, "teacher")


def pretrain_masked_tokens(model: EncoderModel, data: Dataset, cfg: TrainConfig, mask_rate: float = 0.15) -> TrainingHistory:
    """Self-supervised warm start of every encoder weight by masked-token recovery.

    Stands in for the general-purpose pretraining a real teacher checkpoint
    would carry. Masked positions are replaced by the UNK id; the tied
    vocabulary projection predicts the original token.
    """
    rng = make_rng(derive(cfg.seed, "mlm-mask"))
    unk = 1

    def batch_loss(idx):
        ids, mask = data.batch(idx)
        ids = ids.copy()
        candidates = mask.copy()
        candidates[:, 0] = False
        pick = candidates & (rng.random(ids.shape) < mask_rate)
        if not pick.any():
            rows, cols = np.nonzero(candidates)
            pick[rows[0], cols[0]] = True
        targets = ids[pick]
        ids[pick] = unk
        logits = model.vocab_logits(ids, mask)
        flat = T.reshape(logits, (-1, logits.shape[-1]))
        chosen = T.take_rows(flat, np.flatnonzero(pick.reshape(-1)))
        return T.cross_entropy(chosen, targets), (None, None)

    return _run_epochs(model, data, cfg, batch_loss, "pretrain")


def distill_student(student: EncoderModel, data: Dataset, soft_labels: np.ndarray | None,
                    loss_cfg: LossConfig, cfg: TrainConfig) -> TrainingHistory:
    """Train ``student`` on ``alpha * BCE(y0, y) + (1 - alpha) * BCE(y0, y1)``.

    ``soft_labels`` are the teacher probabilities for every row of ``data``,
    extracted once beforehand because the teacher is frozen here. They may be
    ``None`` only when ``alpha == 1``.
    """
    if student.config.num_labels != data.labels.shape[1]:
        raise ContractError(f"student predicts {student.config.num_labels} labels, data has {data.labels.shape[1]}")
    use_soft = loss_cfg.alpha < 1.0
    if use_soft:
        if soft_labels is None:
            raise ContractError("soft labels are required when alpha < 1")
        if soft_labels.shape != data.labels.shape:
            raise ContractError(f"teacher label space {soft_labels.shape} != student {data.labels.shape}")
    w = loss_cfg.label_weights
    temp = loss_cfg.temperature

    def batch_loss(idx):
        ids, mask = data.batch(idx)
        y0 = student.label_logits(ids, mask)
        hard = T.bce_with_logits(y0, data.labels[idx], w) if loss_cfg.alpha > 0 else None
        soft = None
        if use_soft:
            z = y0 if temp == 1.0 else y0 * (1.0 / temp)
            soft = T.bce_with_logits(z, soft_labels[idx], w)
        loss = total_loss(hard, soft, loss_cfg)
        return loss, (None if hard is None else hard.item(), None if soft is None else soft.item())

    return _run_epochs(student, data, cfg, batch_loss, "student")


def predict_logits(model: EncoderModel, data: Dataset, batch_size: int = 64) -> np.ndarray:
    out = []
    for idx in data.batches(batch_size):
        ids, mask = data.batch(idx)
        out.append(model.label_logits(ids, mask).data)
    return np.concatenate(out) if out else np.zeros((0, model.config.num_labels))


def predict_proba(model: EncoderModel, data: Dataset, batch_size: int = 64) -> np.ndarray:
    return T.sigmoid_array(predict_logits(model, data, batch_size))

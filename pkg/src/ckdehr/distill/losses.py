"""Hard/soft label losses and their weighted combination."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..tensor import Tensor

NUM_LABELS = 25


class LossConfigError(ValueError):
    pass


@dataclass
class LossConfig:
    """``alpha`` weights the hard-label loss, ``beta = 1 - alpha`` the soft one."""

    alpha: float = 0.9
    label_weights: np.ndarray | None = field(default=None, repr=False)
    temperature: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise LossConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.label_weights is not None:
            w = np.asarray(self.label_weights, dtype=np.float64)
            if w.shape != (NUM_LABELS,) or np.any(w <= 0):
                raise LossConfigError("label_weights must be 25 positive values")
            self.label_weights = w
        if self.temperature <= 0:
            raise LossConfigError("temperature must be positive")

    @property
    def beta(self) -> float:
        return 1.0 - self.alpha


def bce_with_logits(logits, targets, weights=None) -> Tensor:
    """Mean weighted binary cross-entropy over every (sample, label) cell."""
    return T.bce_with_logits(logits, targets, weights)


def bce_naive(logits: np.ndarray, targets: np.ndarray, weights=None) -> float:
    """Textbook formula through explicit sigmoid and log; only for moderate logits.

    ``1 - sigmoid(x)`` is formed as ``sigmoid(-x)``; the literal subtraction
    loses about eight digits by x = 20.
    """
    x = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    w = 1.0 if weights is None else np.asarray(weights, dtype=np.float64)
    s = 1.0 / (1.0 + np.exp(-x))
    s_neg = 1.0 / (1.0 + np.exp(x))
    return float(np.mean(-w * (t * np.log(s) + (1 - t) * np.log(s_neg))))


def total_loss(l_hard, l_soft, config: LossConfig):
    """``alpha * l_hard + (1 - alpha) * l_soft``; accepts floats or scalar tensors.

    The soft term is dropped entirely when ``alpha == 1`` and the hard term when
    ``alpha == 0``, so the degenerate settings are exact.
    """
    a = config.alpha
    if not 0.0 <= a <= 1.0:
        raise LossConfigError(f"alpha must be in [0, 1], got {a}")
    for v in (l_hard, l_soft):
        if v is None:
            continue
        val = v.item() if isinstance(v, Tensor) else float(v)
        if not np.isfinite(val) or val < 0:
            raise ValueError(f"losses must be finite and non-negative, got {val}")
    if a == 1.0:
        return l_hard
    if a == 0.0:
        return l_soft
    return l_hard * a + l_soft * (1.0 - a)

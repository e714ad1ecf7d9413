"""Tokenized sample sets and batching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ehr.render import FusedSample
from ..models.tokenizer import Vocabulary, encode_batch


@dataclass
class Dataset:
    ids: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    sample_ids: list[str]

    def __len__(self) -> int:
        return len(self.sample_ids)

    @classmethod
    def from_samples(cls, samples: list[FusedSample], vocab: Vocabulary, max_seq_len: int) -> "Dataset":
        ids, mask = encode_batch([s.text for s in samples], vocab, max_seq_len)
        labels = np.array([s.label for s in samples], dtype=np.float64).reshape(len(samples), -1)
        return cls(ids, mask, labels, [s.sample_id for s in samples])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.ids[idx], self.mask[idx], self.labels[idx], [self.sample_ids[i] for i in idx])

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Ids and mask for rows ``idx``, cut to the longest row."""
        mask = self.mask[idx]
        width = max(1, int(mask.sum(axis=1).max()))
        return self.ids[idx, :width], mask[:, :width]

    def batches(self, batch_size: int, rng: np.random.Generator | None = None):
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(self), batch_size):
            yield order[start:start + batch_size]

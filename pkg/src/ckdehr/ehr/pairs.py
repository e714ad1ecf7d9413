"""Consecutive visit pairs and patient-level splitting."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from itertools import groupby

from .records import VisitRecord, sort_records


@dataclass(frozen=True)
class VisitPair:
    source: VisitRecord
    next_diagnoses: frozenset[str]
    next_time: int
    visit_index: int

    @property
    def patient_id(self) -> str:
        return self.source.patient_id


def build_visit_pairs(records: list[VisitRecord]) -> list[VisitPair]:
    """Pair every visit with the same patient's following visit.

    A patient with v visits yields v - 1 pairs. Input is regrouped and sorted
    first, so interleaved rows are fine.
    """
    pairs = []
    for _, group in groupby(sort_records(list(records)), key=lambda r: r.patient_id):
        visits = list(group)
        for i in range(len(visits) - 1):
            a, b = visits[i], visits[i + 1]
            pairs.append(VisitPair(a, b.diagnoses, b.visit_time, i))
    return pairs


def split_by_patient(pairs: list[VisitPair], test_fraction: float, seed: int) -> tuple[list[VisitPair], list[VisitPair]]:
    """Deterministic train/test split that keeps each patient on one side."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must be in [0, 1)")
    train, test = [], []
    for p in pairs:
        h = hashlib.sha256(f"{seed}:{p.patient_id}".encode()).digest()
        u = int.from_bytes(h[:8], "little") / 2.0 ** 64
        (test if u < test_fraction else train).append(p)
    return train, test

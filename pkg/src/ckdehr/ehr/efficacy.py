"""Treatment-efficacy statistics over visit pairs.

For every (disease, treatment) co-occurring at a source visit, count the pairs
in which the treatment was given while the disease was present (exposed) and
the subset in which the disease is gone at the next visit (resolved). Every
treatment at the visit is credited for every disease at that visit. The score
is the Laplace-smoothed resolution rate ``(resolved + a) / (exposed + a + b)``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable

from .pairs import VisitPair

MEDICATION = "medication"
PROCEDURE = "procedure"


@dataclass
class EfficacyEntry:
    exposed: int = 0
    resolved: int = 0


@dataclass
class EfficacyTable:
    entries: dict[tuple[str, str, str], EfficacyEntry] = field(default_factory=dict)
    smoothing: tuple[float, float] = (1.0, 1.0)
    min_support: int = 3

    def __len__(self) -> int:
        return len(self.entries)

    def score(self, disease: str, treatment: str, kind: str) -> float:
        e = self.entries[(disease, treatment, kind)]
        return efficacy_score(e.exposed, e.resolved, *self.smoothing)

    def diseases(self) -> set[str]:
        return {d for d, _, _ in self.entries}

    def ranked(self, disease: str) -> list[tuple[str, str, float, int]]:
        """All qualifying (treatment, kind, score, exposed) rows for ``disease`` in rank order."""
        rows = []
        for (d, t, kind), e in self.entries.items():
            if d != disease or e.exposed < self.min_support:
                continue
            rows.append((t, kind, efficacy_score(e.exposed, e.resolved, *self.smoothing), e.exposed))
        rows.sort(key=lambda r: (-r[2], -r[3], r[0], r[1]))
        return rows

    def merge(self, other: "EfficacyTable") -> "EfficacyTable":
        """Additive merge of counts (shards of the same cohort)."""
        out = EfficacyTable(smoothing=self.smoothing, min_support=self.min_support)
        for src in (self, other):
            for key, e in src.entries.items():
                acc = out.entries.setdefault(key, EfficacyEntry())
                acc.exposed += e.exposed
                acc.resolved += e.resolved
        return out

    def rows(self) -> list[dict]:
        out = []
        for (d, t, kind), e in sorted(self.entries.items()):
            out.append({"disease": d, "treatment": t, "kind": kind, "exposed_pairs": e.exposed,
                        "resolved_pairs": e.resolved,
                        "efficacy_score": efficacy_score(e.exposed, e.resolved, *self.smoothing),
                        "ranked": e.exposed >= self.min_support})
        return out

    def dump(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in self.rows():
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def efficacy_score(exposed: int, resolved: int, a: float = 1.0, b: float = 1.0) -> float:
    return (resolved + a) / (exposed + a + b)


def rank_efficacy(pairs: Iterable[VisitPair], min_support: int = 3,
                  smoothing: tuple[float, float] = (1.0, 1.0)) -> EfficacyTable:
    table = EfficacyTable(smoothing=smoothing, min_support=min_support)
    entries = table.entries
    for p in pairs:
        src = p.source
        treatments = [(m, MEDICATION) for m in src.medications] + [(q, PROCEDURE) for q in src.procedures]
        if not treatments:
            continue
        for d in src.diagnoses:
            resolved = d not in p.next_diagnoses
            for t, kind in treatments:
                e = entries.get((d, t, kind))
                if e is None:
                    e = entries[(d, t, kind)] = EfficacyEntry()
                e.exposed += 1
                e.resolved += resolved
    return table


def top_k_treatments(table: EfficacyTable, disease: str, k: int = 5) -> list[tuple[str, float]]:
    """Best ``k`` treatments for ``disease``.

    Order: score descending, then exposure descending, then treatment code.
    Treatments below the table's ``min_support`` never appear.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    return [(t, s) for t, _, s, _ in table.ranked(disease)[:k]]

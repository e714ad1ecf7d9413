"""Natural-language rendering of visit pairs into training samples."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources

from .efficacy import EfficacyTable, top_k_treatments
from .pairs import VisitPair
from .registry import PhenotypeRegistry, phenotype_labels

PLACEHOLDERS = ("{diagnoses}", "{medications}", "{procedures}", "{efficacy_ranking}")
RAW_PLACEHOLDERS = PLACEHOLDERS[:3]
NO_ENTRIES = "none recorded"


class TemplateError(ValueError):
    def __init__(self, placeholder: str):
        super().__init__(f"template is missing placeholder {placeholder}")
        self.placeholder = placeholder


@dataclass(frozen=True)
class FusedSample:
    text: str
    label: tuple[int, ...]
    patient_id: str
    visit_index: int
    dropped_codes: tuple[str, ...] = field(default=(), compare=False)

    @property
    def sample_id(self) -> str:
        return f"{self.patient_id}:{self.visit_index}"

    def to_json(self) -> str:
        return json.dumps({"text": self.text, "label": list(self.label),
                           "patient_id": self.patient_id, "visit_index": self.visit_index},
                          ensure_ascii=False)


def load_template(name: str = "fused") -> str:
    """Bundled template text; ``name`` is ``fused`` or ``raw``."""
    return resources.files("ckdehr.assets").joinpath(f"{name}_template_v1.txt").read_text(encoding="utf-8")


def _listing(codes) -> str:
    return ", ".join(sorted(codes)) if codes else "none"


def efficacy_clause(diagnoses, table: EfficacyTable, k: int = 5) -> str:
    parts = []
    for d in sorted(diagnoses):
        top = top_k_treatments(table, d, k)
        if top:
            ranked = ", ".join(f"{i}. {t} ({s:.2f})" for i, (t, s) in enumerate(top, 1))
            parts.append(f"for {d}: {ranked}")
    return "; ".join(parts) if parts else NO_ENTRIES


def _fill(template: str, required, values: dict[str, str]) -> str:
    for ph in required:
        if ph not in template:
            raise TemplateError(ph)
    text = template
    for ph, v in values.items():
        text = text.replace(ph, v)
    return text.strip()


def _label(pair: VisitPair, registry: PhenotypeRegistry) -> tuple[tuple[int, ...], tuple[str, ...]]:
    y = phenotype_labels(pair.next_diagnoses, registry)
    dropped = tuple(sorted(d for d in pair.next_diagnoses if d not in registry))
    return tuple(int(v) for v in y), dropped


def render_sample(pair: VisitPair, table: EfficacyTable, registry: PhenotypeRegistry,
                  template: str, k: int = 5) -> FusedSample:
    src = pair.source
    text = _fill(template, PLACEHOLDERS, {
        "{diagnoses}": _listing(src.diagnoses),
        "{medications}": _listing(src.medications),
        "{procedures}": _listing(src.procedures),
        "{efficacy_ranking}": efficacy_clause(src.diagnoses, table, k),
    })
    label, dropped = _label(pair, registry)
    return FusedSample(text, label, src.patient_id, pair.visit_index, dropped)


def render_raw_sample(pair: VisitPair, registry: PhenotypeRegistry, template: str) -> FusedSample:
    """Visit text without the efficacy clause (the no-fusion ablation input)."""
    src = pair.source
    text = _fill(template, RAW_PLACEHOLDERS, {
        "{diagnoses}": _listing(src.diagnoses),
        "{medications}": _listing(src.medications),
        "{procedures}": _listing(src.procedures),
    })
    label, dropped = _label(pair, registry)
    return FusedSample(text, label, src.patient_id, pair.visit_index, dropped)


def write_samples(samples, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(s.to_json() + "\n")


def read_samples(path: str | os.PathLike) -> list[FusedSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                o = json.loads(line)
                out.append(FusedSample(o["text"], tuple(int(v) for v in o["label"]),
                                       str(o["patient_id"]), int(o["visit_index"])))
    return out

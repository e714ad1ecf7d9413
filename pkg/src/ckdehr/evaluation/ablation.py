"""Component ablation: efficacy fusion on/off x distillation on/off."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

from ..config import RunConfig
from ..distill.data import Dataset
from ..ehr import PhenotypeRegistry, VisitRecord, default_registry
from .metrics import MetricReport

log = logging.getLogger(__name__)

COMBINATIONS = ((False, False), (False, True), (True, False), (True, True))


@dataclass
class AblationRow:
    eadf: bool
    lorckd: bool
    report: MetricReport
    input_hash: str
    evaluated: str

    def to_dict(self) -> dict:
        return {"eadf": self.eadf, "lorckd": self.lorckd, "evaluated": self.evaluated,
                "input_hash": self.input_hash, **self.report.headline()}


@dataclass
class AblationResult:
    rows: list[AblationRow] = field(default_factory=list)
    text_hashes: dict[str, str] = field(default_factory=dict)

    def table(self) -> str:
        out = ["eadf,lorckd,evaluated,acc,f1,auc,aupr,input_hash"]
        for r in self.rows:
            h = r.report.headline()
            out.append(f"{int(r.eadf)},{int(r.lorckd)},{r.evaluated},{h['acc']:.6f},{h['f1']:.6f},"
                       f"{h['auc']:.6f},{h['aupr']:.6f},{r.input_hash}")
        return "\n".join(out) + "\n"


def _hash_texts(samples) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(s.text.encode())
        h.update(b"\0")
    return h.hexdigest()


def ablation_run(records: list[VisitRecord], cfg: RunConfig, combos=COMBINATIONS,
                 registry: PhenotypeRegistry | None = None, fused_samples=None) -> AblationResult:
    """Run each (eadf, lorckd) combination on the same cohort and seeds.

    ``eadf=False`` feeds raw visit text; ``lorckd=False`` scores the
    fine-tuned teacher itself instead of a distilled student. One teacher is
    trained per text variant and shared by both of its rows. ``fused_samples``
    is an optional ``(train, test)`` pair of already rendered fused samples
    used for the ``eadf=True`` rows instead of re-fusing ``records``.
    """
    from .. import pipeline as P

    registry = registry or default_registry()
    result = AblationResult()
    teachers = {}
    for eadf, lorckd in combos:
        if eadf not in teachers:
            if eadf and fused_samples is not None:
                train_s, test_s = fused_samples
            else:
                corpus = P.fuse(records, cfg, registry, fused=eadf)
                train_s, test_s = corpus.train, corpus.test
            vocab = P.build_vocab(train_s, registry)
            train = Dataset.from_samples(train_s, vocab, cfg.max_seq_len)
            test = Dataset.from_samples(test_s, vocab, cfg.max_seq_len)
            teacher = P.train_teacher(train, vocab, cfg).model
            text_hash = _hash_texts(list(train_s) + list(test_s))
            result.text_hashes["fused" if eadf else "raw"] = text_hash
            teachers[eadf] = (teacher, vocab, train, test, text_hash)
        teacher, vocab, train, test, text_hash = teachers[eadf]
        if lorckd:
            soft = P.extract_soft_labels(teacher, train, vocab, cfg, registry)
            model, _ = P.train_student(train, soft, len(vocab), cfg)
            evaluated = "student"
        else:
            model, evaluated = teacher, "teacher"
        report = P.evaluate_model(model, test, registry)
        log.info("ablation eadf=%s lorckd=%s input=%s %s", eadf, lorckd, text_hash[:12], report.headline())
        result.rows.append(AblationRow(eadf, lorckd, report, text_hash, evaluated))
    return result

"""Efficacy-aware fusion of visit records into labelled text samples."""

from .efficacy import EfficacyEntry, EfficacyTable, efficacy_score, rank_efficacy, top_k_treatments
from .pairs import VisitPair, build_visit_pairs, split_by_patient
from .records import (DuplicateVisitError, IngestResult, RowError, SchemaError, VisitRecord,
                      ingest_records, read_visit_table, write_visit_table)
from .registry import PhenotypeRegistry, default_registry, load_registry, phenotype_labels, write_registry
from .render import (FusedSample, TemplateError, load_template, read_samples, render_raw_sample,
                     render_sample, write_samples)
from .synth import default_planted_efficacy, generate_synthetic_cohort

__all__ = [
    "DuplicateVisitError", "EfficacyEntry", "EfficacyTable", "FusedSample", "IngestResult",
    "PhenotypeRegistry", "RowError", "SchemaError", "TemplateError", "VisitPair", "VisitRecord",
    "build_visit_pairs", "default_planted_efficacy", "default_registry", "efficacy_score",
    "generate_synthetic_cohort", "ingest_records", "load_registry", "load_template",
    "phenotype_labels", "rank_efficacy", "read_samples", "read_visit_table", "render_raw_sample",
    "render_sample", "split_by_patient", "top_k_treatments", "write_registry", "write_samples",
    "write_visit_table",
]

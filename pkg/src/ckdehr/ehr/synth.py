"""Synthetic cohorts with planted treatment efficacy.

Generative process per patient:

* draw 1-3 initial phenotypes (registry-index-weighted prevalence);
* at each visit, every active phenotype receives one of its planted
  treatments (uniformly) or, if it has none, a generic medication; with
  probability ``noise_treatment_rate`` an unrelated medication is added;
* an active phenotype resolves before the next visit with the largest planted
  probability among its administered treatments, or with the baseline for its
  acute/mixed/chronic type when none was administered;
* inactive phenotypes start with probability ``onset_rate``.

Treatment codes starting with ``P`` are procedures, everything else is a
medication.
"""

from __future__ import annotations

import json
import os
from typing import Mapping

import numpy as np

from ..rng import make_rng
from .records import VisitRecord
from .registry import PhenotypeRegistry, default_registry

BASELINE_RESOLUTION = {"acute": 0.45, "mixed": 0.3, "chronic": 0.1}
GENERIC_MEDICATIONS = tuple(f"G{i:02d}" for i in range(1, 11))


class SynthConfigError(ValueError):
    pass


def treatment_kind(code: str) -> str:
    return "procedure" if code.startswith("P") else "medication"


def default_planted_efficacy(registry: PhenotypeRegistry | None = None) -> dict[tuple[str, str], float]:
    """Two medications per phenotype (one effective, one not) plus a shared procedure for acute ones."""
    registry = registry or default_registry()
    planted = {}
    for i, name in enumerate(registry.names):
        planted[(name, f"M{2 * i + 1:02d}")] = 0.85
        planted[(name, f"M{2 * i + 2:02d}")] = 0.15
        if registry.kinds[i] == "acute":
            planted[(name, f"P{i % 5 + 1:02d}")] = 0.6
    return planted


def generate_synthetic_cohort(seed: int, n_patients: int, visits_per_patient_range=(2, 5),
                              planted_efficacy: Mapping[tuple[str, str], float] | None = None,
                              registry: PhenotypeRegistry | None = None,
                              onset_rate: float = 0.01, noise_treatment_rate: float = 0.1,
                              baseline_resolution: Mapping[str, float] | None = None) -> list[VisitRecord]:
    registry = registry or default_registry()
    planted = dict(default_planted_efficacy(registry) if planted_efficacy is None else planted_efficacy)
    baseline = dict(BASELINE_RESOLUTION if baseline_resolution is None else baseline_resolution)
    for key, p in planted.items():
        if not 0.0 <= p <= 1.0:
            raise SynthConfigError(f"planted probability for {key} is {p}, outside [0, 1]")
        if key[0] not in registry:
            raise SynthConfigError(f"planted disease {key[0]!r} is not in the registry")
    for name, p in list(baseline.items()) + [("onset_rate", onset_rate), ("noise_treatment_rate", noise_treatment_rate)]:
        if not 0.0 <= p <= 1.0:
            raise SynthConfigError(f"{name} probability {p} outside [0, 1]")
    lo, hi = visits_per_patient_range
    if lo < 1 or hi < lo:
        raise SynthConfigError(f"bad visits_per_patient_range {visits_per_patient_range}")
    if n_patients < 0:
        raise SynthConfigError("n_patients must be non-negative")

    names = registry.names
    by_disease: dict[str, list[tuple[str, float]]] = {}
    for (d, t), p in sorted(planted.items()):
        by_disease.setdefault(d, []).append((t, p))
    noise_pool = sorted({t for _, t in planted if treatment_kind(t) == "medication"} | set(GENERIC_MEDICATIONS))
    prevalence = np.linspace(2.0, 0.5, len(names))
    prevalence /= prevalence.sum()

    rng = make_rng(seed)
    records = []
    width = max(4, len(str(n_patients)))
    for pi in range(n_patients):
        pid = f"S{pi:0{width}d}"
        n_visits = int(rng.integers(lo, hi + 1))
        k = 1 + int(rng.binomial(2, 0.35))
        active = set(rng.choice(len(names), size=k, replace=False, p=prevalence).tolist())
        t = int(rng.integers(0, 10_000))
        for _ in range(n_visits):
            diagnoses = {names[i] for i in active}
            meds, procs = set(), set()
            resolve_p = {}
            for i in sorted(active):
                d = names[i]
                options = by_disease.get(d)
                if options:
                    code, p = options[int(rng.integers(len(options)))]
                else:
                    code, p = GENERIC_MEDICATIONS[int(rng.integers(len(GENERIC_MEDICATIONS)))], None
                (procs if treatment_kind(code) == "procedure" else meds).add(code)
                resolve_p[i] = p
            if rng.random() < noise_treatment_rate:
                meds.add(noise_pool[int(rng.integers(len(noise_pool)))])
            records.append(VisitRecord(pid, t, frozenset(diagnoses), frozenset(meds), frozenset(procs)))
            given = meds | procs
            nxt = set()
            for i in sorted(active):
                d = names[i]
                ps = [p for code, p in by_disease.get(d, ()) if code in given]
                p = max(ps) if ps else baseline[registry.kinds[i]]
                if rng.random() >= p:
                    nxt.add(i)
            for i in range(len(names)):
                if i not in active and rng.random() < onset_rate * len(names) * prevalence[i]:
                    nxt.add(i)
            active = nxt
            t += int(rng.integers(1, 366))
    return records


def write_planted_sidecar(planted: Mapping[tuple[str, str], float], path: str | os.PathLike) -> None:
    rows = [{"disease": d, "treatment": t, "kind": treatment_kind(t), "probability": p}
            for (d, t), p in sorted(planted.items())]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"planted_efficacy": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_planted_sidecar(path: str | os.PathLike) -> dict[tuple[str, str], float]:
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)["planted_efficacy"]
    return {(r["disease"], r["treatment"]): float(r["probability"]) for r in rows}

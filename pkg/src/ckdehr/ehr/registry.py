"""The fixed 25-phenotype label space; list position is the label index."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

PHENOTYPES: tuple[tuple[str, str], ...] = (
    ("Acute and unspecified renal failure", "acute"),
    ("Acute cerebrovascular disease", "acute"),
    ("Acute myocardial infarction", "acute"),
    ("Cardiac dysrhythmias", "mixed"),
    ("Chronic kidney disease", "chronic"),
    ("Chronic obstructive pulmonary disease", "chronic"),
    ("Complications of surgical/medical care", "acute"),
    ("Conduction disorders", "mixed"),
    ("Congestive heart failure; nonhypertensive", "mixed"),
    ("Coronary atherosclerosis and related", "chronic"),
    ("Diabetes mellitus with complications", "mixed"),
    ("Diabetes mellitus without complication", "chronic"),
    ("Disorders of lipid metabolism", "chronic"),
    ("Essential hypertension", "chronic"),
    ("Fluid and electrolyte disorders", "acute"),
    ("Gastrointestinal hemorrhage", "acute"),
    ("Hypertension with complications", "chronic"),
    ("Other liver diseases", "mixed"),
    ("Other lower respiratory disease", "acute"),
    ("Other upper respiratory disease", "acute"),
    ("Pleurisy; pneumothorax; pulmonary collapse", "acute"),
    ("Pneumonia", "acute"),
    ("Respiratory failure; insufficiency; arrest", "acute"),
    ("Septicemia (except in labor)", "acute"),
    ("Shock", "acute"),
)

NUM_LABELS = 25
KINDS = {"acute", "chronic", "mixed"}


class RegistryError(ValueError):
    pass


@dataclass(frozen=True)
class PhenotypeRegistry:
    names: tuple[str, ...]
    kinds: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) != NUM_LABELS:
            raise RegistryError(f"registry must list exactly {NUM_LABELS} phenotypes, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise RegistryError("registry names must be unique")
        if len(self.kinds) != len(self.names):
            raise RegistryError("one type tag per phenotype")
        bad = set(self.kinds) - KINDS
        if bad:
            raise RegistryError(f"unknown phenotype types: {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __contains__(self, name) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        return self._index[name]

    def kind(self, name: str) -> str:
        return self.kinds[self._index[name]]

    @property
    def _index(self) -> dict[str, int]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {n: i for i, n in enumerate(self.names)}
            object.__setattr__(self, "_idx", idx)
        return idx


def default_registry() -> PhenotypeRegistry:
    return PhenotypeRegistry(tuple(n for n, _ in PHENOTYPES), tuple(k for _, k in PHENOTYPES))


def load_registry(path: str | os.PathLike) -> PhenotypeRegistry:
    names, kinds = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise RegistryError(f"{path}:{lineno}: expected 'name<TAB>type'")
            names.append(parts[0])
            kinds.append(parts[1])
    return PhenotypeRegistry(tuple(names), tuple(kinds))


def write_registry(registry: PhenotypeRegistry, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, kind in zip(registry.names, registry.kinds):
            fh.write(f"{name}\t{kind}\n")


def phenotype_labels(diagnoses: Iterable[str], registry: PhenotypeRegistry) -> np.ndarray:
    """Multi-hot vector over the registry; codes outside it are ignored."""
    if len(registry) != NUM_LABELS:
        raise RegistryError(f"registry must have {NUM_LABELS} entries")
    y = np.zeros(NUM_LABELS, dtype=np.int64)
    for d in diagnoses:
        if d in registry:
            y[registry.index(d)] = 1
    return y

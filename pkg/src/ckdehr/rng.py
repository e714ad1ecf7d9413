"""Seeded randomness.

Every random draw in the package goes through :func:`make_rng`, which returns a
numpy ``Generator`` over the PCG64 bit generator (128-bit LCG state with an
XSL-RR output permutation, O'Neill 2014). ``derive`` splits a parent seed into
independent child streams by hashing a label, so adding a new consumer never
shifts the draws of an existing one.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


def derive(seed: int, label: str) -> int:
    h = hashlib.sha256(f"{int(seed) & SEED_MASK}:{label}".encode()).digest()
    return int.from_bytes(h[:8], "little")

"""Deterministic random-stream derivation.

All randomness in the package flows from integer seeds through
numpy SeedSequence, so any unit of work (dataset record, synthesis attempt,
training step) owns a stream derived from (seed, labels...) and is
reproducible regardless of execution order or worker count.
"""
from __future__ import annotations

import numpy as np

# Stream domain labels. Keeping them distinct guarantees that, e.g., the
# record-0 datagen stream never collides with the run-0 evaluation stream.
DOMAIN_DATAGEN = 11
DOMAIN_TRAIN_BATCH = 21
DOMAIN_TRAIN_NOISE = 22
DOMAIN_INIT = 23
DOMAIN_SYNTH = 31
DOMAIN_EVAL = 41

SeedLike = int | tuple


def as_entropy(seed: SeedLike) -> tuple[int, ...]:
    """Normalize a seed (int or nested tuple of ints) to a flat tuple."""
    if isinstance(seed, (int, np.integer)):
        if seed < 0:
            raise ValueError("seeds must be non-negative")
        return (int(seed),)
    flat: list[int] = []
    for part in seed:
        flat.extend(as_entropy(part))
    return tuple(flat)


def make_rng(*labels: SeedLike) -> np.random.Generator:
    """Generator for the stream identified by the label path."""
    entropy: list[int] = []
    for label in labels:
        entropy.extend(as_entropy(label))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_int(*labels: SeedLike) -> int:
    """Collapse a label path into a single uint64 seed (for reporting)."""
    entropy: list[int] = []
    for label in labels:
        entropy.extend(as_entropy(label))
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])

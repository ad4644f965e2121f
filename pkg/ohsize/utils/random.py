"""Seeded random streams.

All randomness in ohsize flows from one integer seed. Independent pieces of
work (bootstrap replicates, candidate evaluations, simulation replicates) get
their own generator spawned from a ``SeedSequence`` so results do not depend on
evaluation order.
"""
from __future__ import annotations

from typing import List, Optional, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence, None]


def seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def generator(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed))


def spawn_generators(seed: SeedLike, count: int) -> List[np.random.Generator]:
    """Return ``count`` independent generators derived from ``seed``."""
    return [np.random.default_rng(child) for child in seed_sequence(seed).spawn(count)]


def spawn_seeds(seed: SeedLike, count: int) -> List[np.random.SeedSequence]:
    return seed_sequence(seed).spawn(count)


def derive_int_seed(seed: SeedLike, *keys: int) -> int:
    """Deterministic 32-bit seed for a labelled sub-task (e.g. replicate, n)."""
    base = seed_sequence(seed)
    entropy: Optional[int] = base.entropy if isinstance(base.entropy, int) else None
    child = np.random.SeedSequence(entropy, spawn_key=tuple(base.spawn_key) + tuple(int(k) for k in keys))
    return int(child.generate_state(1)[0])

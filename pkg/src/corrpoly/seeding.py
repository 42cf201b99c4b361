"""Order-independent random streams.

Every random draw in the package comes from a stream identified by a key
tuple.  The stream for key ``(purpose, *indices)`` under master seed ``s`` is

    PCG64(SeedSequence(entropy=s, spawn_key=(purpose, *indices)))

so realization ``r``'s field slice ``k`` in stream group ``g`` always reads
``(FIELD, g, r, k)`` no matter which worker computes it or in what order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FIELD = 0
PATHS = 1
BOOTSTRAP = 2
AUX = 3

MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class Streams:
    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= MAX_SEED:
            raise ValueError("master seed must fit in an unsigned 64-bit integer")

    def generator(self, purpose: int, *key: int) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(purpose, *map(int, key)))
        return np.random.Generator(np.random.PCG64(seq))


def as_streams(rng) -> Streams:
    """Accept a :class:`Streams` or a bare integer seed."""
    if isinstance(rng, Streams):
        return rng
    if isinstance(rng, (int, np.integer)):
        return Streams(int(rng))
    raise TypeError(f"expected Streams or int seed, got {type(rng).__name__}")

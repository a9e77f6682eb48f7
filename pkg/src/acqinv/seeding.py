"""Deterministic seed derivation.

All randomness flows from one master seed through ``SeedSequence`` paths,
so independent stages (simulation, pairing, training, evaluation) get
statistically independent streams that never collide and never depend on
call order.
"""

from __future__ import annotations

import numpy as np

# Stage tags keep derived streams for different purposes disjoint even
# when the remaining path components coincide.
STAGE_SIMULATE = 1
STAGE_PATCHES = 2
STAGE_PAIRS = 3
STAGE_TRAIN = 4
STAGE_EVAL = 5


def derive_seed(master_seed: int, *path: int) -> int:
    """Derive a child integer seed from a master seed and a path of ints."""
    seq = np.random.SeedSequence([int(master_seed), *[int(p) for p in path]])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def as_generator(seed: int, *path: int) -> np.random.Generator:
    """A fresh PCG64 generator for ``seed`` extended by ``path``."""
    if path:
        seed = derive_seed(seed, *path)
    return np.random.Generator(np.random.PCG64(seed))

"""Named derivation of independent RNG streams from one master seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode())


def derive_seed_sequence(seed, *path) -> np.random.SeedSequence:
    """SeedSequence for ``seed`` at a named path like ("sgd", replicate)."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(p) for p in path))


def derive_rng(seed, *path) -> np.random.Generator:
    return np.random.default_rng(derive_seed_sequence(seed, *path))

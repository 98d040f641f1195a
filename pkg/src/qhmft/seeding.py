"""Named random streams derived from one master seed."""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode())


def derive_rng(seed: int, *purpose) -> np.random.Generator:
    """Independent generator for ``(seed, *purpose)``; same inputs give the same stream."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in purpose)))

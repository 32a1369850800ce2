"""Counter-based random streams keyed by (seed, purpose, indices).

Every draw in a simulation comes from ``stream(seed, purpose, *indices)`` so a
time step's samples do not depend on which other time steps were evaluated or
in what order.
"""
from __future__ import annotations

import zlib

import numpy as np


def _purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Independent Philox generator for one (seed, purpose, indices) key."""
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    key = (_purpose_key(purpose),) + tuple(int(i) for i in indices)
    if any(k < 0 for k in key):
        raise ValueError("stream indices must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))

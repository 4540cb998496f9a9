"""Splittable, counter-based random streams.

Every stream is a Philox generator keyed by a ``SeedSequence`` whose spawn key
is derived from the caller's labels, so ``stream(seed, "chains", 3)`` is the
same sequence on every machine regardless of how work is scheduled.
"""
from __future__ import annotations

import zlib

import numpy as np


def _label(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def stream(seed: int, *keys) -> np.random.Generator:
    """Return an independent generator for ``(seed, *keys)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_label(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))

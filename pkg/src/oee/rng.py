"""Seeded random streams.

All randomness goes through numpy's Philox4x64 counter-based generator. Child
streams are derived hierarchically with ``SeedSequence`` spawn keys, so stream
``(seed, 3, 7)`` is the same on every run and independent of ``(seed, 3, 8)``.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for ``seed`` at the position ``path`` in the tree."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, *path: int) -> int:
    """A plain integer seed derived from ``(seed, *path)``; useful for configs."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))

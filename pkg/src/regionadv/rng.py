"""Seeded RNG substreams.

All randomness in the library flows from one root seed through named
substreams, so individual components (training shuffle, dataset split,
attack restarts, ...) are reproducible independently of each other.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for the named substream of ``seed``.

    The same (seed, name) pair always yields the same stream; distinct
    names yield statistically independent streams.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    tag = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))

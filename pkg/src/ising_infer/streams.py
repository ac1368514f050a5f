"""Deterministic derivation of independent random streams.

Replication r of an experiment with master seed s draws from
``default_rng(derive_seed(s, r))``. The derived seed is the first 8 bytes,
big-endian, of ``SHA-256(b"{s}:{r}")``, so any worker can reconstruct any
stream from (master_seed, index) alone and aggregation order never matters.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, index: int) -> int:
    """Return the child seed for replication ``index`` under ``master_seed``."""
    if index < 0:
        raise ValueError("replication index must be nonnegative")
    digest = hashlib.sha256(f"{master_seed}:{index}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def substream(master_seed: int, index: int) -> np.random.Generator:
    """Return the generator for replication ``index``."""
    return np.random.default_rng(derive_seed(master_seed, index))


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed or an existing Generator and return a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)

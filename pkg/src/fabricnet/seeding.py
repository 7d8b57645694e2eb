"""Deterministic seed derivation.

Every stochastic step derives its own seed from (base seed, string key), so
work can be split per sample or per trial and still reproduce bit-for-bit
regardless of execution order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, key: str) -> int:
    """Mix a base seed with a key into a new 63-bit seed."""
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def as_generator(rng: int | np.random.Generator | None) -> np.random.Generator | None:
    """Accept either a seed or a ready Generator; None passes through."""
    if rng is None or isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(int(rng))

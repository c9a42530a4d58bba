"""Deterministic pseudo-random streams.

Every seeded operation in the package draws from a Philox4x64-10
counter-based generator whose 128-bit key is BLAKE2b(seed, *labels).
The same (seed, labels) pair therefore reproduces the same stream on
any platform and in any call order, which is what the repository-wide
determinism contract relies on.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, *labels) -> int:
    """128-bit stream key from a 64-bit seed and an arbitrary label path."""
    h = hashlib.blake2b(digest_size=16)
    h.update((int(seed) & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"))
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int, *labels) -> np.random.Generator:
    """Independent generator for the stream named by ``labels``."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *labels)))


def stable_bucket(token: str, dim: int, seed: int) -> int:
    """Map a token to one of ``dim`` buckets with a seeded, process-stable hash."""
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8,
                        key=(int(seed) & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little") % dim

"""Shared domain types: interaction matrices, embedding sets, splits.

All types here are immutable after construction and safe to share across
threads. Entity/item ids are opaque strings; dense indices are assigned
in first-seen order over a deterministic input ordering and the mapping
round-trips exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .rng import make_rng


class HcfError(Exception):
    """Base error for user-facing failures (bad input, bad config)."""


@dataclass(frozen=True)
class InteractionMatrix:
    """Sparse binary entity x item observations.

    ``pairs`` holds (entity index, item index) tuples; presence means an
    observed usage (value 1), absence means unobserved (value 0).
    """

    entity_ids: tuple
    item_ids: tuple
    pairs: frozenset

    def __post_init__(self):
        if len(set(self.entity_ids)) != len(self.entity_ids):
            raise HcfError("duplicate entity ids")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise HcfError("duplicate item ids")
        m, n = self.m, self.n
        for u, i in self.pairs:
            if not (0 <= u < m and 0 <= i < n):
                raise HcfError(f"pair ({u}, {i}) out of range for {m}x{n} matrix")

    @property
    def m(self) -> int:
        return len(self.entity_ids)

    @property
    def n(self) -> int:
        return len(self.item_ids)

    @property
    def entity_index(self) -> dict:
        return {e: k for k, e in enumerate(self.entity_ids)}

    @property
    def item_index(self) -> dict:
        return {i: k for k, i in enumerate(self.item_ids)}

    def pairs_sorted(self) -> list:
        return sorted(self.pairs)

    def pair_arrays(self) -> tuple:
        """(u, i) index arrays in sorted pair order."""
        ps = self.pairs_sorted()
        if not ps:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        arr = np.asarray(ps, dtype=np.int64)
        return arr[:, 0], arr[:, 1]

    def item_counts(self) -> np.ndarray:
        """Distinct-entity count per item index."""
        counts = np.zeros(self.n, dtype=np.int64)
        for _, i in self.pairs:
            counts[i] += 1
        return counts

    def entity_items(self) -> list:
        """Per entity index, the sorted list of held item indices."""
        held = [[] for _ in range(self.m)]
        for u, i in self.pairs:
            held[u].append(i)
        return [sorted(h) for h in held]

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.m, self.n), dtype=np.float64)
        for u, i in self.pairs:
            dense[u, i] = 1.0
        return dense

    def with_pairs(self, pairs) -> "InteractionMatrix":
        """Same id maps, different entry set."""
        return InteractionMatrix(self.entity_ids, self.item_ids, frozenset(pairs))


@dataclass(frozen=True)
class EmbeddingSet:
    """Id-keyed dense vectors of one uniform dimension."""

    dim: int
    rows: dict  # id -> np.ndarray of shape (dim,), insertion-ordered

    def __post_init__(self):
        if self.dim < 1:
            raise HcfError("embedding dim must be positive")
        for eid, vec in self.rows.items():
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (self.dim,):
                raise HcfError(f"vector for {eid!r} has {v.shape[0] if v.ndim == 1 else 'bad'} "
                               f"entries, expected {self.dim}")
            if not np.all(np.isfinite(v)):
                raise HcfError(f"non-finite value in vector for {eid!r}")
            self.rows[eid] = v

    @property
    def ids(self) -> tuple:
        return tuple(self.rows)

    def matrix(self, ids=None) -> np.ndarray:
        """Row-stacked vectors in the order of ``ids`` (default: insertion order)."""
        order = self.ids if ids is None else ids
        missing = [e for e in order if e not in self.rows]
        if missing:
            shown = ", ".join(repr(e) for e in missing[:10])
            raise HcfError(f"{len(missing)} ids missing from embedding set: {shown}")
        if not order:
            return np.zeros((0, self.dim))
        return np.stack([self.rows[e] for e in order])

    def zero_ids(self) -> list:
        return [e for e, v in self.rows.items() if not np.any(v)]


@dataclass(frozen=True)
class SplitSpec:
    """Pair-level split fractions plus the seed that fixes the shuffle."""

    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise HcfError("split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise HcfError("split fractions must sum to 1")


def largest_remainder_sizes(total: int, fracs) -> list:
    """Apportion ``total`` across ``fracs``; ties on remainder go to the
    earliest slot (train before val before test)."""
    exact = [Fraction(f).limit_denominator(10**12) * total for f in fracs]
    sizes = [int(e) for e in exact]
    leftover = total - sum(sizes)
    order = sorted(range(len(fracs)), key=lambda k: (-(exact[k] - sizes[k]), k))
    for k in order[:leftover]:
        sizes[k] += 1
    return sizes


def sample_unobserved(matrix: InteractionMatrix, count: int, rng,
                      distinct: bool = False):
    """Uniformly sample ``count`` (entity, item) pairs unobserved in ``matrix``.

    With ``distinct=True`` the sampled pairs are also unique; if the pool of
    unobserved pairs is smaller than ``count`` the whole pool is returned.
    Sampling is rejection-based, so identical (matrix, rng state) always
    yields identical draws.
    """
    m, n = matrix.m, matrix.n
    observed = np.fromiter((u * n + i for u, i in matrix.pairs_sorted()),
                           dtype=np.int64, count=len(matrix.pairs))
    observed.sort()
    pool = m * n - len(observed)
    if pool == 0:
        raise HcfError("no unobserved pairs to sample from")
    if distinct and count > pool:
        count = pool
    out = []
    taken = set()
    remaining = count
    while remaining > 0:
        draw = rng.integers(0, m * n, size=max(16, int(remaining * 1.3)))
        if len(observed):
            pos = np.searchsorted(observed, draw)
            hit = (pos < len(observed)) & (observed[np.minimum(pos, len(observed) - 1)] == draw)
            draw = draw[~hit]
        for code in draw:
            if distinct:
                if code in taken:
                    continue
                taken.add(code)
            out.append(code)
            remaining -= 1
            if remaining == 0:
                break
    codes = np.asarray(out, dtype=np.int64)
    return codes // n, codes % n


def split_interactions(matrix: InteractionMatrix, spec: SplitSpec):
    """Partition positive pairs into train/val/test by a seeded shuffle.

    All three outputs share the input's id maps; their entry sets are
    pairwise disjoint and union back to the input exactly.
    """
    pairs = matrix.pairs_sorted()
    if not pairs:
        raise HcfError("nothing to split: interaction matrix is empty")
    rng = make_rng(spec.seed, "split")
    perm = rng.permutation(len(pairs))
    shuffled = [pairs[k] for k in perm]
    n_train, n_val, n_test = largest_remainder_sizes(
        len(pairs), (spec.train_frac, spec.val_frac, spec.test_frac))
    train = matrix.with_pairs(shuffled[:n_train])
    val = matrix.with_pairs(shuffled[n_train:n_train + n_val])
    test = matrix.with_pairs(shuffled[n_train + n_val:])
    return train, val, test

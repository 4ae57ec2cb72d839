"""Empirical AND/OR moment vectors and the empirical attribute distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AttributeDistribution, AttributeProfile, ResponseMatrix
from .errors import ConfigError, DimensionError
from .tmatrix import ComboSet

_MASK_BITS = 62


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Moment values aligned with ``combos.subsets``; ``counts / sample_size``."""

    values: np.ndarray
    sample_size: int
    combos: ComboSet
    kind: str
    counts: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (len(self.combos),):
            raise DimensionError("moment values must align with the combo set")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def complement(self) -> "MomentVector":
        """``1 - values``: OR moments of R are one minus AND moments of ``1 - R``."""
        kind = "AND" if self.kind == "OR" else "OR"
        counts = None if self.counts is None else self.sample_size - self.counts
        return MomentVector(1.0 - self.values, self.sample_size, self.combos, kind, counts)


def _check(r: ResponseMatrix, combos: ComboSet) -> None:
    if r.n < 1:
        raise ConfigError("response matrix is empty")
    if combos.m != r.m:
        raise DimensionError(f"combo set is over m={combos.m} items, responses have m={r.m}")


def _count(r: ResponseMatrix, combos: ComboSet, any_hit: bool) -> np.ndarray:
    subs = combos.subsets
    if not subs:
        return np.zeros(0, dtype=np.int64)
    if r.m <= _MASK_BITS:
        # collapse identical response patterns, then test each subset mask against each pattern
        codes = (r.data.astype(np.int64) << np.arange(r.m, dtype=np.int64)).sum(axis=1)
        patterns, mult = np.unique(codes, return_counts=True)
        masks = np.array(subs, dtype=np.int64)
        out = np.empty(len(subs), dtype=np.int64)
        step = max(1, 2_000_000 // max(1, patterns.size))
        for lo in range(0, len(subs), step):
            hit = patterns[None, :] & masks[lo:lo + step, None]
            ok = hit != 0 if any_hit else hit == masks[lo:lo + step, None]
            out[lo:lo + step] = ok.astype(np.int64) @ mult
        return out
    items, lens = combos.item_table
    out = np.empty(len(subs), dtype=np.int64)
    for j in range(len(subs)):
        cols = r.data[:, items[j, : lens[j]]]
        out[j] = int((cols.any(axis=1) if any_hit else cols.all(axis=1)).sum())
    return out


def alpha_vector(r: ResponseMatrix, combos: ComboSet) -> MomentVector:
    """Fraction of subjects answering every item of each subset positively."""
    _check(r, combos)
    counts = _count(r, combos, any_hit=False)
    return MomentVector(counts / r.n, r.n, combos, "AND", counts)


def beta_vector(r: ResponseMatrix, combos: ComboSet) -> MomentVector:
    """Fraction of subjects answering at least one item of each subset positively."""
    _check(r, combos)
    counts = _count(r, combos, any_hit=True)
    return MomentVector(counts / r.n, r.n, combos, "OR", counts)


def moment_vector(r: ResponseMatrix, combos: ComboSet, model) -> MomentVector:
    from .core import Model

    return alpha_vector(r, combos) if Model.parse(model) is Model.DINA else beta_vector(r, combos)


def empirical_distribution(profiles, k: int) -> AttributeDistribution:
    """Relative frequency of each of the ``2^k`` profiles.

    ``profiles`` may be AttributeProfile objects or integer profile indices.
    """
    if len(profiles) == 0:
        raise ConfigError("need at least one profile")
    idx = np.array([p.index if isinstance(p, AttributeProfile) else int(p) for p in profiles], dtype=np.int64)
    for p in profiles:
        if isinstance(p, AttributeProfile) and p.k != k:
            raise DimensionError(f"profile of length {p.k} given with k={k}")
    if idx.min() < 0 or idx.max() >= (1 << k):
        raise DimensionError(f"profile index out of range for k={k}")
    counts = np.bincount(idx, minlength=1 << k)
    return AttributeDistribution(counts / idx.size)

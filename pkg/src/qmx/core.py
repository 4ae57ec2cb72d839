"""Domain types and Q-matrix predicates.

Bit convention used everywhere in the package: attribute ``j`` (1-based)
is bit ``j - 1`` of a profile index, least significant first.  So with
``k = 2`` the profile order is ``00, 10, 01, 11`` when profiles are
written as ``(A^1, A^2)``.  Every ``2^k``-wide array (T/U columns,
attribute distributions) follows ascending profile index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError

BIT_CONVENTION = (
    "profile index = sum_j A^j * 2^(j-1): attribute j is bit j-1, least significant first; "
    "2^k-wide arrays are ordered by ascending profile index"
)

SUM_TOL = 1e-12


class Model(str, Enum):
    DINA = "dina"
    DINO = "dino"

    @property
    def kind(self) -> str:
        """Moment kind paired with the model: AND for DINA, OR for DINO."""
        return "AND" if self is Model.DINA else "OR"

    @classmethod
    def parse(cls, value) -> "Model":
        if isinstance(value, Model):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown model {value!r}; expected 'dina' or 'dino'") from None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def profile_table(k: int) -> np.ndarray:
    """All ``2^k`` profiles as a ``(2^k, k)`` 0/1 array, row ``a`` is profile index ``a``."""
    if k < 1:
        raise DimensionError("k must be >= 1")
    idx = np.arange(1 << k)
    return _frozen(((idx[:, None] >> np.arange(k)[None, :]) & 1).astype(np.int8))


def complement_index(index: int, k: int) -> int:
    return ((1 << k) - 1) ^ int(index)


@dataclass(frozen=True)
class AttributeProfile:
    bits: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) == 0:
            raise DimensionError("profile must have at least one attribute")
        if any(b not in (0, 1) for b in bits):
            raise ConfigError(f"profile bits must be 0/1, got {bits}")
        object.__setattr__(self, "bits", bits)

    @property
    def k(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        return sum(b << j for j, b in enumerate(self.bits))

    @classmethod
    def from_index(cls, index: int, k: int) -> "AttributeProfile":
        if not 0 <= index < (1 << k):
            raise DimensionError(f"profile index {index} out of range for k={k}")
        return cls(tuple((index >> j) & 1 for j in range(k)))

    def complement(self) -> "AttributeProfile":
        return AttributeProfile(tuple(1 - b for b in self.bits))

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int8)


class QMatrix:
    """Binary ``m x k`` item-attribute matrix with a known/unknown mask.

    ``mask[i, j]`` is True when the entry is fixed a priori.  A matrix built
    from plain entries is fully known.  Unknown entries are stored as 0.
    """

    __slots__ = ("entries", "mask")

    def __init__(self, entries, mask=None):
        e = np.asarray(entries)
        if e.ndim != 2:
            raise DimensionError(f"Q-matrix must be 2-D, got shape {e.shape}")
        if e.shape[0] < 1 or e.shape[1] < 1:
            raise DimensionError("Q-matrix needs m >= 1 and k >= 1")
        if not np.all((e == 0) | (e == 1)):
            raise ConfigError("Q-matrix entries must be 0 or 1")
        if mask is None:
            mk = np.ones(e.shape, dtype=bool)
        else:
            mk = np.asarray(mask, dtype=bool)
            if mk.shape != e.shape:
                raise DimensionError(f"mask shape {mk.shape} differs from entries {e.shape}")
        e = np.where(mk, e, 0).astype(np.int8)
        object.__setattr__(self, "entries", _frozen(e))
        object.__setattr__(self, "mask", _frozen(mk))

    def __setattr__(self, name, value):
        raise AttributeError("QMatrix is immutable")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "QMatrix":
        return cls(np.array(rows, dtype=np.int8))

    @classmethod
    def from_signed(cls, values) -> "QMatrix":
        """Build from an array where -1 marks an unknown entry."""
        v = np.asarray(values)
        if v.ndim != 2:
            raise DimensionError("Q-matrix must be 2-D")
        if not np.all((v == 0) | (v == 1) | (v == -1)):
            raise ConfigError("Q-matrix entries must be 0, 1 or -1 (unknown)")
        return cls(np.where(v < 0, 0, v), mask=v >= 0)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def k(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> tuple:
        return self.entries.shape

    @property
    def fully_known(self) -> bool:
        return bool(self.mask.all())

    def signed(self) -> np.ndarray:
        return np.where(self.mask, self.entries, -1).astype(np.int8)

    def row_codes(self) -> np.ndarray:
        """Row ``i`` as an integer with bit ``j`` = ``Q[i, j]``."""
        return (self.entries.astype(np.int64) << np.arange(self.k)).sum(axis=1)

    def column_keys(self) -> list:
        """Column ``j`` read top to bottom as a big-endian binary integer."""
        m = self.m
        return [sum(int(self.entries[i, j]) << (m - 1 - i) for i in range(m)) for j in range(self.k)]

    def permute_columns(self, perm) -> "QMatrix":
        perm = list(perm)
        if sorted(perm) != list(range(self.k)):
            raise DimensionError(f"{perm} is not a permutation of {self.k} columns")
        return QMatrix(self.entries[:, perm], self.mask[:, perm])

    def tolist(self) -> list:
        return self.entries.astype(int).tolist()

    def __eq__(self, other):
        if not isinstance(other, QMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.entries, other.entries)
            and np.array_equal(self.mask, other.mask)
        )

    def __hash__(self):
        return hash((self.shape, self.entries.tobytes(), self.mask.tobytes()))

    def __repr__(self):
        rows = ["".join("?" if not mk else str(int(x)) for x, mk in zip(r, mr))
                for r, mr in zip(self.entries, self.mask)]
        return f"QMatrix({' '.join(rows)})"


@dataclass(frozen=True, eq=False)
class ItemParams:
    """Per-item correct-response (``c = 1 - slip``) and guessing probabilities."""

    c: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        if c.ndim != 1 or c.shape != g.shape:
            raise DimensionError(f"c and g must be vectors of equal length, got {c.shape} and {g.shape}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(g))):
            raise ConfigError("item parameters must be finite")
        if np.any(c < 0) or np.any(c > 1) or np.any(g < 0) or np.any(g > 1):
            raise ConfigError("item parameters must lie in [0, 1]")
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "g", _frozen(g))

    @classmethod
    def uniform(cls, m: int, c: float, g: float) -> "ItemParams":
        return cls(np.full(m, float(c)), np.full(m, float(g)))

    @property
    def m(self) -> int:
        return self.c.shape[0]

    @property
    def separated(self) -> bool:
        return bool(np.all(self.c >= self.g))

    def subset(self, items) -> "ItemParams":
        items = list(items)
        return ItemParams(self.c[items], self.g[items])

    def __eq__(self, other):
        if not isinstance(other, ItemParams):
            return NotImplemented
        return np.array_equal(self.c, other.c) and np.array_equal(self.g, other.g)

    def __repr__(self):
        return f"ItemParams(c={np.round(self.c, 4).tolist()}, g={np.round(self.g, 4).tolist()})"


@dataclass(frozen=True, eq=False)
class AttributeDistribution:
    """Probability vector over the ``2^k`` attribute profiles."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        n = p.shape[0] if p.ndim == 1 else 0
        if p.ndim != 1 or n < 2 or n & (n - 1):
            raise DimensionError(f"distribution length must be 2^k with k >= 1, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise ConfigError("distribution entries must lie in [0, 1]")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ConfigError(f"distribution must sum to 1 (got {p.sum()!r})")
        object.__setattr__(self, "p", _frozen(p))

    @classmethod
    def uniform(cls, k: int) -> "AttributeDistribution":
        return cls(np.full(1 << k, 1.0 / (1 << k)))

    @classmethod
    def from_weights(cls, w) -> "AttributeDistribution":
        """Normalise nonnegative weights (e.g. a solver iterate) onto the simplex."""
        w = np.clip(np.asarray(w, dtype=float), 0.0, None)
        return cls(w / w.sum())

    @property
    def k(self) -> int:
        return int(self.p.shape[0]).bit_length() - 1

    @property
    def diversified(self) -> bool:
        return bool(np.all(self.p > 0))

    def permute_attributes(self, perm) -> "AttributeDistribution":
        """Distribution of profiles after relabelling attribute ``perm[j]`` as ``j``."""
        bits = profile_table(self.k)
        new_idx = (bits[:, list(perm)].astype(np.int64) << np.arange(self.k)).sum(axis=1)
        # new column j holds old attribute perm[j]; old profile a maps to new_idx[a]
        q = np.zeros_like(self.p)
        q[new_idx] = self.p
        return AttributeDistribution(q)

    def __eq__(self, other):
        if not isinstance(other, AttributeDistribution):
            return NotImplemented
        return np.array_equal(self.p, other.p)

    def __repr__(self):
        return f"AttributeDistribution({np.round(self.p, 4).tolist()})"


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """``N x m`` binary responses; ``latent`` holds profile indices for simulated data."""

    data: np.ndarray
    latent: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise DimensionError(f"responses must be an N x m array with N, m >= 1, got {d.shape}")
        if not np.all((d == 0) | (d == 1)):
            raise ConfigError("responses must be 0/1")
        object.__setattr__(self, "data", _frozen(d.astype(np.int8)))
        if self.latent is not None:
            lat = np.asarray(self.latent, dtype=np.int64)
            if lat.shape != (d.shape[0],):
                raise DimensionError("latent profiles must have one entry per subject")
            object.__setattr__(self, "latent", _frozen(lat))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def items(self, cols) -> "ResponseMatrix":
        return ResponseMatrix(self.data[:, list(cols)], self.latent)

    def complemented(self) -> "ResponseMatrix":
        return ResponseMatrix(1 - self.data, self.latent)

    def latent_profiles(self, k: int) -> list:
        if self.latent is None:
            return []
        return [AttributeProfile.from_index(int(a), k) for a in self.latent]


def _profile_array(profile, k: int) -> np.ndarray:
    a = profile.as_array() if isinstance(profile, AttributeProfile) else np.asarray(profile)
    if a.shape != (k,):
        raise DimensionError(f"profile has length {a.shape[0] if a.ndim else 0}, Q-matrix has k={k}")
    return a


def _check_item(q: QMatrix, item: int) -> None:
    if not 0 <= item < q.m:
        raise DimensionError(f"item {item} out of range for m={q.m}")


def capability_dina(profile, q: QMatrix, item: int) -> int:
    """1 iff the profile has every attribute required by ``item``."""
    a = _profile_array(profile, q.k)
    _check_item(q, item)
    return int(np.all(a >= q.entries[item]))


def capability_dino(profile, q: QMatrix, item: int) -> int:
    """1 iff the profile has at least one attribute required by ``item``.

    An item requiring nothing has no attribute to share, so it returns 0;
    this keeps ``dino(A) = 1 - dina(complement(A))`` true on every row.
    """
    a = _profile_array(profile, q.k)
    _check_item(q, item)
    return int(np.any((a == 1) & (q.entries[item] == 1)))


def capability_matrix(q: QMatrix, model) -> np.ndarray:
    """``m x 2^k`` 0/1 matrix of capability indicators for every item and profile."""
    model = Model.parse(model)
    bits = profile_table(q.k).astype(np.int64)
    hits = q.entries.astype(np.int64) @ bits.T
    if model is Model.DINA:
        return (hits == q.entries.sum(axis=1, keepdims=True)).astype(np.int8)
    return (hits > 0).astype(np.int8)


def missing_unit_rows(q: QMatrix) -> list:
    """Attributes (0-based) whose unit row ``e_j`` does not appear among known rows of ``q``."""
    known = q.mask.all(axis=1)
    rows = {tuple(r) for r in q.entries[known].tolist()}
    return [j for j in range(q.k) if tuple(int(i == j) for i in range(q.k)) not in rows]


def is_complete(q: QMatrix) -> bool:
    return not missing_unit_rows(q)


def unit_row_items(q: QMatrix) -> list:
    """First known item carrying each unit row, or None where missing."""
    out = []
    for j in range(q.k):
        e = np.zeros(q.k, dtype=np.int8)
        e[j] = 1
        hit = [i for i in range(q.m) if q.mask[i].all() and np.array_equal(q.entries[i], e)]
        out.append(hit[0] if hit else None)
    return out


def equivalent(q1: QMatrix, q2: QMatrix) -> bool:
    """Same multiset of columns."""
    if q1.shape != q2.shape:
        raise DimensionError(f"cannot compare Q-matrices of shapes {q1.shape} and {q2.shape}")
    return sorted(q1.column_keys()) == sorted(q2.column_keys())


def canonical_order(q: QMatrix) -> list:
    keys = q.column_keys()
    return sorted(range(q.k), key=lambda j: (keys[j], j))


def canonicalize(q: QMatrix) -> QMatrix:
    """Representative of the equivalence class: columns in ascending big-endian order."""
    return q.permute_columns(canonical_order(q))


def canonical_key(q: QMatrix) -> tuple:
    """Sort key of the canonical form, row-major over its entries."""
    return tuple(canonicalize(q).entries.ravel().tolist())

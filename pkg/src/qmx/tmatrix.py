"""T-matrices (AND combinations, DINA) and U-matrices (OR combinations, DINO).

Rows are indexed by item subsets, columns by attribute profiles.  With
item parameters ``(c, g)`` the row for subset ``S`` holds, for every
profile, the probability that all (T) or at least one (U) of the items in
``S`` is answered positively.  ``T p`` is therefore the vector of expected
AND-moments for the attribute distribution ``p``.

Subsets are bitmasks over items (bit ``i`` = item ``i``, 0-based).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable

import numpy as np

from .core import ItemParams, Model, QMatrix, capability_matrix, complement_index
from .errors import ConfigError, DimensionError

SATURATE_UP_TO = 12
TRUNCATED_ORDER = 3


def subset_mask(items: Iterable[int]) -> int:
    mask = 0
    for i in items:
        mask |= 1 << int(i)
    return mask


def subset_items(mask: int) -> list:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def _as_mask(subset) -> int:
    if isinstance(subset, (int, np.integer)):
        return int(subset)
    return subset_mask(subset)


@dataclass(frozen=True)
class ComboSet:
    """Ordered item subsets used as moment conditions."""

    subsets: tuple
    m: int
    max_order: int

    def __post_init__(self):
        subs = tuple(int(s) for s in self.subsets)
        object.__setattr__(self, "subsets", subs)
        if self.m < 1:
            raise DimensionError("m must be >= 1")
        if len(set(subs)) != len(subs):
            raise ConfigError("combo set contains duplicate subsets")
        full = (1 << self.m) - 1
        for s in subs:
            if s <= 0 or s & ~full:
                raise ConfigError(f"subset {s:#b} is empty or references items beyond m={self.m}")
            if bin(s).count("1") > self.max_order:
                raise ConfigError(f"subset {s:#b} exceeds max_order={self.max_order}")

    def __len__(self):
        return len(self.subsets)

    @property
    def saturated(self) -> bool:
        return len(self.subsets) == (1 << self.m) - 1

    @cached_property
    def item_table(self) -> tuple:
        """``(items, lengths)``: padded ``(n, L)`` item indices (-1 pad) and subset sizes."""
        n = len(self.subsets)
        width = max([bin(s).count("1") for s in self.subsets], default=1)
        items = np.full((n, width), -1, dtype=np.int64)
        lens = np.zeros(n, dtype=np.int64)
        for r, s in enumerate(self.subsets):
            its = subset_items(s)
            items[r, : len(its)] = its
            lens[r] = len(its)
        items.setflags(write=False)
        lens.setflags(write=False)
        return items, lens

    def restrict(self, items) -> "ComboSet":
        """Subsets lying entirely inside ``items``, re-indexed to ``range(len(items))``."""
        items = list(items)
        pos = {it: j for j, it in enumerate(items)}
        allowed = subset_mask(items)
        subs = []
        for s in self.subsets:
            if s & ~allowed == 0:
                subs.append(subset_mask(pos[i] for i in subset_items(s)))
        return ComboSet(tuple(subs), len(items), self.max_order)


def enumerate_combos(m: int, max_order: int) -> ComboSet:
    """All nonempty subsets of at most ``max_order`` items, by (size, bitmask)."""
    if m < 1:
        raise DimensionError("m must be >= 1")
    if not 1 <= max_order <= m:
        raise ConfigError(f"max_order must lie in [1, {m}], got {max_order}")
    subs = []
    for size in range(1, max_order + 1):
        subs.extend(sorted(subset_mask(c) for c in combinations(range(m), size)))
    return ComboSet(tuple(subs), m, max_order)


def default_combos(m: int, max_order: int | None = None) -> ComboSet:
    """Saturated for ``m <= 12``, otherwise subsets of up to three items."""
    if max_order is None:
        max_order = m if m <= SATURATE_UP_TO else min(TRUNCATED_ORDER, m)
    return enumerate_combos(m, max_order)


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    rows: np.ndarray
    combos: ComboSet
    kind: str
    params: ItemParams
    augmented: bool = field(default=False)

    def __post_init__(self):
        r = np.array(self.rows, dtype=float, copy=True)
        r.setflags(write=False)
        object.__setattr__(self, "rows", r)

    @property
    def shape(self) -> tuple:
        return self.rows.shape

    def __matmul__(self, p):
        return self.rows @ np.asarray(getattr(p, "p", p), dtype=float)


def _check(q: QMatrix, params: ItemParams, combos: ComboSet | None = None) -> None:
    if params.m != q.m:
        raise DimensionError(f"params cover {params.m} items, Q-matrix has m={q.m}")
    if combos is not None and combos.m != q.m:
        raise DimensionError(f"combo set is over m={combos.m} items, Q-matrix has m={q.m}")


def _noisy_rows(q: QMatrix, params: ItemParams, model: Model) -> np.ndarray:
    xi = capability_matrix(q, model).astype(float)
    return params.g[:, None] + (params.c - params.g)[:, None] * xi


def b_row(q: QMatrix, subset, params: ItemParams) -> np.ndarray:
    """AND row: elementwise product of the single-item rows ``(c_i - g_i) B_Q(I_i) + g_i``."""
    _check(q, params)
    mask = _as_mask(subset)
    items = subset_items(mask)
    if not items:
        raise ConfigError("subset must be nonempty")
    if items[-1] >= q.m:
        raise DimensionError(f"subset references item {items[-1]} but m={q.m}")
    single = _noisy_rows(q, params, Model.DINA)
    return np.prod(single[items], axis=0)


def f_row(q: QMatrix, subset, params: ItemParams) -> np.ndarray:
    """OR row: ``1 - prod_i (1 - F_{c,g,Q}(I_i))`` over the items in the subset."""
    _check(q, params)
    mask = _as_mask(subset)
    items = subset_items(mask)
    if not items:
        raise ConfigError("subset must be nonempty")
    if items[-1] >= q.m:
        raise DimensionError(f"subset references item {items[-1]} but m={q.m}")
    single = _noisy_rows(q, params, Model.DINO)
    return 1.0 - np.prod(1.0 - single[items], axis=0)


def _stack(single: np.ndarray, combos: ComboSet) -> np.ndarray:
    # row(S) = row(S minus its highest item) * single[highest], reusing earlier rows when present
    n = single.shape[1]
    out = np.empty((len(combos), n))
    seen = {}
    for r, s in enumerate(combos.subsets):
        top = s.bit_length() - 1
        rest = s & ~(1 << top)
        if rest == 0:
            out[r] = single[top]
        elif rest in seen:
            out[r] = out[seen[rest]] * single[top]
        else:
            out[r] = np.prod(single[subset_items(s)], axis=0)
        seen[s] = r
    return out


def build_T(q: QMatrix, params: ItemParams, combos: ComboSet) -> MomentMatrix:
    _check(q, params, combos)
    rows = _stack(_noisy_rows(q, params, Model.DINA), combos)
    return MomentMatrix(rows, combos, "AND", params)


def build_U(q: QMatrix, params: ItemParams, combos: ComboSet) -> MomentMatrix:
    _check(q, params, combos)
    miss = _stack(1.0 - _noisy_rows(q, params, Model.DINO), combos)
    return MomentMatrix(1.0 - miss, combos, "OR", params)


def build_moment_matrix(q: QMatrix, params: ItemParams, combos: ComboSet, model) -> MomentMatrix:
    return build_T(q, params, combos) if Model.parse(model) is Model.DINA else build_U(q, params, combos)


def augment_ones(mat: MomentMatrix) -> MomentMatrix:
    """Append the all-ones row (the sum-to-one constraint written as a moment)."""
    n = mat.rows.shape[1]
    rows = np.vstack([mat.rows.reshape(-1, n), np.ones((1, n))])
    return MomentMatrix(rows, mat.combos, mat.kind, mat.params, augmented=True)


def duality_check(q: QMatrix, combos: ComboSet | None = None, pair_complement: bool = True) -> bool:
    """Check ``T(Q)[:, A] + U(Q)[:, A^c] == 1`` for every subset row and profile ``A``.

    Uses ``c = 1, g = 0``.  With ``pair_complement=False`` the columns are
    added without reordering, which generally fails.
    """
    if combos is None:
        combos = enumerate_combos(q.m, q.m)
    ones = ItemParams.uniform(q.m, 1.0, 0.0)
    t = build_T(q, ones, combos).rows
    u = build_U(q, ones, combos).rows
    if pair_complement:
        perm = [complement_index(a, q.k) for a in range(1 << q.k)]
        u = u[:, perm]
    return bool(np.array_equal(t + u, np.ones_like(t)))


def dump_csv(mat: MomentMatrix, path) -> None:
    """Write rows with a subset-bitmask column and one column per profile index."""
    n = mat.rows.shape[1]
    labels = [str(s) for s in mat.combos.subsets]
    if mat.augmented:
        labels.append("ones")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subset_mask"] + [f"profile_{a}" for a in range(n)])
        for lab, row in zip(labels, mat.rows):
            w.writerow([lab] + [repr(float(x)) for x in row])

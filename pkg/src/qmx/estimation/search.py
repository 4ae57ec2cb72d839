"""Q-matrix search: exhaustive, anchored per-item calibration, and dispatch to split-merge."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import (
    BIT_CONVENTION,
    AttributeDistribution,
    ItemParams,
    Model,
    QMatrix,
    ResponseMatrix,
)
from ..errors import BudgetExceededError, ConfigError, DimensionError, EmptyCandidateSetError
from ..moments import MomentVector, moment_vector
from ..tmatrix import ComboSet, default_combos, enumerate_combos
from ._system import MomentSystem
from .params import fit_params_system

SCHEMA_VERSION = "qmx.fit/1"
DEFAULT_BUDGET = 2**22
TIE_TOL = 1e-6
_BATCH = 4096


@dataclass(frozen=True)
class SearchConstraints:
    """Prior knowledge restricting the candidate set.

    ``known`` carries fixed entries through its mask.  ``anchor_rows[j]`` is
    the item asserted to require only attribute ``j``.  ``candidate_filter``
    is an arbitrary predicate on candidate QMatrix objects.
    """

    known: QMatrix | None = None
    anchor_rows: tuple | None = None
    candidate_filter: Callable | None = None
    allow_zero_rows: bool = True

    def resolved(self, m: int, k: int) -> QMatrix:
        if self.known is not None and self.known.shape != (m, k):
            raise DimensionError(f"known entries have shape {self.known.shape}, expected {(m, k)}")
        signed = self.known.signed() if self.known is not None else -np.ones((m, k), dtype=np.int8)
        if self.anchor_rows is not None:
            if len(self.anchor_rows) != k or len(set(self.anchor_rows)) != k:
                raise ConfigError("anchor_rows must name k distinct items")
            for j, i in enumerate(self.anchor_rows):
                if not 0 <= i < m:
                    raise ConfigError(f"anchor item {i} out of range")
                unit = np.zeros(k, dtype=np.int8)
                unit[j] = 1
                row = signed[i]
                if np.any((row >= 0) & (row != unit)):
                    raise ConfigError(f"anchor item {i} conflicts with its known entries")
                signed[i] = unit
        return QMatrix.from_signed(signed)


@dataclass(frozen=True, eq=False)
class FitResult:
    q_hat: QMatrix
    params_hat: ItemParams
    p_hat: AttributeDistribution
    score: float
    near_ties: list
    model: Model
    diagnostics: dict = field(default_factory=dict)
    converged: bool = True

    def to_dict(self, config: dict | None = None) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "conventions": {"profile_index": BIT_CONVENTION, "items": "0-based rows of q_hat"},
            "model": self.model.value,
            "q_hat": self.q_hat.tolist(),
            "params": {"c": [float(x) for x in self.params_hat.c], "g": [float(x) for x in self.params_hat.g]},
            "p_hat": [float(x) for x in self.p_hat.p],
            "score": float(self.score),
            "converged": bool(self.converged),
            "near_ties": [{"q": q.tolist(), "score": float(s)} for q, s in self.near_ties],
            "diagnostics": _jsonable(self.diagnostics),
            "config": _jsonable(config or {}),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, QMatrix):
        return x.tolist()
    return x


def _column_keys(stack: np.ndarray) -> np.ndarray:
    """Big-endian column keys of a stack ``(n, m, k)``; requires ``m <= 62``."""
    m = stack.shape[1]
    w = (np.int64(1) << np.arange(m - 1, -1, -1, dtype=np.int64))
    return np.einsum("nmk,m->nk", stack.astype(np.int64), w)


def _canonical_stack(stack: np.ndarray) -> np.ndarray:
    keys = _column_keys(stack)
    order = np.argsort(keys, axis=1, kind="stable")
    return np.take_along_axis(stack, order[:, None, :], axis=2)


def enumerate_candidates(base: QMatrix, budget: int = DEFAULT_BUDGET, allow_zero_rows: bool = True,
                         candidate_filter=None, dedupe: bool = True):
    """Admissible candidates as a stack ``(n, m, k)``, one per equivalence class.

    Unconstrained searches return canonical representatives.  With known
    entries the first admissible member of each class (in enumeration
    order) is kept so the constraints stay visible in the result.
    """
    m, k = base.shape
    free = np.argwhere(~base.mask)
    n_free = len(free)
    if (1 << n_free) > budget:
        raise BudgetExceededError(n_free, budget)
    if m > 62:
        raise ConfigError("exhaustive search supports at most 62 items")
    idx = np.arange(1 << n_free, dtype=np.int64)
    stack = np.broadcast_to(base.entries, (idx.size, m, k)).copy()
    for b, (i, j) in enumerate(free):
        stack[:, i, j] = (idx >> b) & 1
    if not allow_zero_rows:
        stack = stack[stack.any(axis=2).all(axis=1)]
    if candidate_filter is not None:
        keep = [bool(candidate_filter(QMatrix(s))) for s in stack]
        stack = stack[np.array(keep, dtype=bool)] if stack.size else stack
    if stack.shape[0] == 0:
        raise EmptyCandidateSetError("no candidate Q-matrix satisfies the constraints")
    canon = _canonical_stack(stack)
    if dedupe:
        flat = canon.reshape(canon.shape[0], -1)
        _, first = np.unique(flat, axis=0, return_index=True)
        first = np.sort(first)
        stack, canon = stack[first], canon[first]
    if not base.mask.any():
        stack = canon
    return stack, canon, n_free


def _lex_rank(canon: np.ndarray) -> np.ndarray:
    flat = canon.reshape(canon.shape[0], -1)
    return np.lexsort(flat.T[::-1])


def _score_fixed(system: MomentSystem, stack: np.ndarray, params: ItemParams, threads: int):
    chunks = [(lo, stack[lo:lo + _BATCH]) for lo in range(0, stack.shape[0], _BATCH)]
    scores = np.empty(stack.shape[0])
    conv = np.empty(stack.shape[0], dtype=bool)

    def run(job):
        lo, part = job
        return lo, system.batch(part, params)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, chunks))
    else:
        results = [run(j) for j in chunks]
    for lo, (s, c) in results:
        scores[lo:lo + s.size] = s
        conv[lo:lo + c.size] = c
    return scores, conv


def _score_fitted(system: MomentSystem, stack: np.ndarray, seed: int, threads: int):
    def run(ent):
        return fit_params_system(system, QMatrix(ent), seed)

    if threads > 1 and stack.shape[0] > 1:
        with ThreadPoolExecutor(threads) as ex:
            fits = list(ex.map(run, stack))
    else:
        fits = [run(s) for s in stack]
    scores = np.array([f.score for f in fits])
    conv = np.array([f.converged for f in fits], dtype=bool)
    return scores, conv, fits


def _moments(r: ResponseMatrix, combos: ComboSet | None, model: Model, moments: MomentVector | None):
    if moments is not None:
        return moments
    if combos is None:
        combos = default_combos(r.m)
    return moment_vector(r, combos, model)


def _structure_notes(q: QMatrix, model: Model) -> dict:
    zero_rows = [int(i) for i in np.nonzero(~q.entries.any(axis=1))[0]]
    zero_cols = [int(j) for j in np.nonzero(~q.entries.any(axis=0))[0]]
    notes = []
    if zero_rows:
        notes.append(f"items {zero_rows} require no attribute; their response probability does not "
                     "depend on the profile, so c and g are confounded for them")
    if zero_cols:
        notes.append(f"attributes {zero_cols} are required by no item")
    return {"zero_rows": zero_rows, "zero_columns": zero_cols, "warnings": notes}


def exhaustive_search(r: ResponseMatrix | None, k: int, model="dina", constraints: SearchConstraints | None = None,
                      combos: ComboSet | None = None, params: ItemParams | None = None, seed: int = 0,
                      threads: int = 1, budget: int = DEFAULT_BUDGET, tie_tol: float = TIE_TOL,
                      moments: MomentVector | None = None) -> FitResult:
    model = Model.parse(model)
    mv = _moments(r, combos, model, moments)
    m = mv.combos.m
    constraints = constraints or SearchConstraints()
    base = constraints.resolved(m, k)
    if params is not None and params.m != m:
        raise DimensionError(f"fixed params cover {params.m} items, data has m={m}")
    stack, canon, n_free = enumerate_candidates(base, budget, constraints.allow_zero_rows,
                                                constraints.candidate_filter)
    system = MomentSystem(mv, model, k)
    if params is not None:
        scores, conv = _score_fixed(system, stack, params, threads)
        fits = None
    else:
        scores, conv, fits = _score_fitted(system, stack, seed, threads)

    lex = np.empty(stack.shape[0], dtype=np.int64)
    lex[_lex_rank(canon)] = np.arange(stack.shape[0])
    order = np.lexsort((lex, scores))
    win = int(order[0])
    best = float(scores[win])
    tol = tie_tol * (1.0 + best)
    near = [(QMatrix(stack[i]), float(scores[i])) for i in order[1:] if scores[i] <= best + tol]

    q_hat = QMatrix(stack[win])
    if params is None:
        params_hat = fits[win].params
        p_vec, score, ok = fits[win].p, fits[win].score, fits[win].converged
    else:
        params_hat = params
        p_vec, score, ok = system.solve(q_hat, params)
    diag = {
        "strategy": "exhaustive",
        "free_entries": n_free,
        "candidates_evaluated": int(stack.shape[0]),
        "solver_nonconverged": int((~conv).sum()),
        "params_fixed": params is not None,
        "combos": {"count": len(mv.combos), "max_order": mv.combos.max_order, "saturated": mv.combos.saturated},
        "sample_size": mv.sample_size,
    }
    diag.update(_structure_notes(q_hat, model))
    for note in diag["warnings"]:
        warnings.warn(note, stacklevel=2)
    return FitResult(q_hat, params_hat, AttributeDistribution.from_weights(p_vec), float(score), near,
                     model, diag, bool(ok))


def anchored_search(r: ResponseMatrix, k: int, model="dina", constraints: SearchConstraints | None = None,
                    params: ItemParams | None = None, seed: int = 0, threads: int = 1,
                    combos: ComboSet | None = None, tie_tol: float = TIE_TOL) -> FitResult:
    """Calibrate one item at a time against an identity block of anchor items.

    Each non-anchor item is searched over its ``2^k`` rows (fewer if some
    entries are known) using only the anchors and itself, so the whole
    calibration costs ``O(m 2^k)`` candidate evaluations.
    """
    model = Model.parse(model)
    constraints = constraints or SearchConstraints()
    if constraints.anchor_rows is None:
        raise ConfigError("anchored strategy needs anchor_rows")
    m = r.m
    base = constraints.resolved(m, k)
    anchors = list(constraints.anchor_rows)
    signed = base.signed().copy()
    item_ties = {}
    evaluated = 0
    nonconv = 0
    for i in range(m):
        if i in anchors:
            continue
        if base.mask[i].all():
            continue
        sub_items = anchors + [i]
        sub_base = QMatrix.from_signed(signed[sub_items])
        sub_params = params.subset(sub_items) if params is not None else None
        sub_combos = enumerate_combos(len(sub_items), len(sub_items))
        sub = exhaustive_search(r.items(sub_items), k, model, SearchConstraints(known=sub_base,
                                allow_zero_rows=constraints.allow_zero_rows), sub_combos, sub_params,
                                seed, 1, tie_tol=tie_tol)
        signed[i] = sub.q_hat.entries[-1]
        evaluated += sub.diagnostics["candidates_evaluated"]
        nonconv += sub.diagnostics["solver_nonconverged"]
        if sub.near_ties:
            item_ties[i] = [{"row": t.entries[-1].tolist(), "score": s} for t, s in sub.near_ties]
    q_hat = QMatrix(signed.clip(0))
    final = exhaustive_search(r, k, model, SearchConstraints(known=QMatrix(q_hat.entries)),
                              combos, params, seed, threads, tie_tol=tie_tol)
    diag = dict(final.diagnostics)
    diag.update({"strategy": "anchored", "anchor_rows": anchors,
                 "candidates_evaluated": evaluated + 1,
                 "solver_nonconverged": nonconv + final.diagnostics["solver_nonconverged"],
                 "item_ties": item_ties})
    return FitResult(q_hat, final.params_hat, final.p_hat, final.score, [],
                     model, diag, final.converged)


def search_q(r: ResponseMatrix, k: int, model="dina", constraints: SearchConstraints | None = None,
             combos: ComboSet | None = None, strategy: str = "exhaustive", params: ItemParams | None = None,
             seed: int = 0, threads: int = 1, budget: int = DEFAULT_BUDGET, tie_tol: float = TIE_TOL,
             **options) -> FitResult:
    """Estimate Q by minimising the moment loss over admissible candidates.

    ``params=None`` fits ``(c, g)`` per candidate (plug-in estimator);
    passing ItemParams scores every candidate at those known values.
    ``strategy`` is ``"exhaustive"``, ``"anchored"`` (needs anchor rows) or
    ``"split"`` (``group_size``/``overlap`` options, see ``split_merge``).
    """
    if strategy == "exhaustive":
        return exhaustive_search(r, k, model, constraints, combos, params, seed, threads, budget, tie_tol)
    if strategy == "anchored":
        return anchored_search(r, k, model, constraints, params, seed, threads, combos, tie_tol)
    if strategy == "split":
        from .split import split_merge

        return split_merge(r, k, model, params=params, seed=seed, threads=threads, tie_tol=tie_tol, **options)
    raise ConfigError(f"unknown strategy {strategy!r}; expected exhaustive, anchored or split")

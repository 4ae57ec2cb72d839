"""Split the items into overlapping groups, estimate each sub-matrix, and merge.

Group layout: the first ``overlap`` items are shared by every group and the
remaining items are dealt, in order, into chunks of ``group_size - overlap``.
Putting an identity block among the shared items makes every group
complete, which is what the per-group consistency argument needs.

A group whose items lack a unit row for some attribute can fit several
sub-matrices equally well.  Each group therefore contributes its whole tied
set; every aligned combination is assembled into a full Q and the
combination with the lowest full-data score is kept.
"""

from __future__ import annotations

from itertools import permutations, product

import numpy as np

from ..core import ItemParams, Model, QMatrix, ResponseMatrix, canonical_order
from ..errors import AlignmentError, ConfigError
from ..tmatrix import enumerate_combos
from ._system import MomentSystem
from .search import (TIE_TOL, FitResult, SearchConstraints, _canonical_stack, _lex_rank, _moments, _score_fitted,
                     _score_fixed, exhaustive_search)

MIN_AGREEMENT = 0.5
MAX_TIED_PER_GROUP = 64
MAX_ASSEMBLED = 1024


def group_layout(m: int, group_size: int, overlap: int) -> list:
    if group_size >= m:
        return [list(range(m))]
    if not 0 <= overlap < group_size:
        raise ConfigError("overlap must satisfy 0 <= overlap < group_size")
    shared = list(range(overlap))
    step = group_size - overlap
    rest = list(range(overlap, m))
    return [shared + rest[lo:lo + step] for lo in range(0, len(rest), step)]


def align_columns(ref_rows: np.ndarray, rows: np.ndarray):
    """Column permutation of ``rows`` agreeing best with ``ref_rows``.

    Returns ``(perm, agreement, ambiguous)``; ``agreement`` is the fraction
    of matching entries and ``ambiguous`` flags several optimal permutations.
    """
    k = ref_rows.shape[1]
    best, best_hits, n_best = None, -1, 0
    for perm in permutations(range(k)):
        hits = int((rows[:, list(perm)] == ref_rows).sum())
        if hits > best_hits:
            best, best_hits, n_best = list(perm), hits, 1
        elif hits == best_hits:
            n_best += 1
    total = ref_rows.size
    return best, (best_hits / total if total else 1.0), n_best > 1


def _best_perms(ref_rows: np.ndarray, rows: np.ndarray) -> list:
    """Every column permutation reaching the maximal agreement."""
    k = ref_rows.shape[1]
    hits = {perm: int((rows[:, list(perm)] == ref_rows).sum()) for perm in permutations(range(k))}
    top = max(hits.values())
    return [list(perm) for perm, h in hits.items() if h == top]


def _merge_row(candidates: list) -> np.ndarray:
    """Lowest sub-score wins; exact ties use elementwise majority, then the lexicographically smallest row."""
    low = min(s for _, s in candidates)
    tied = [row for row, s in candidates if s <= low]
    if len(tied) == 1:
        return tied[0]
    tied.sort(key=lambda r: tuple(r.tolist()))
    votes = np.sum(tied, axis=0)
    out = tied[0].copy()
    n = len(tied)
    out[2 * votes > n] = 1
    out[2 * votes < n] = 0
    return out


def split_merge(r: ResponseMatrix, k: int, model="dina", group_size: int = 6, overlap: int | None = None,
                max_order: int | None = None, params: ItemParams | None = None, seed: int = 0,
                threads: int = 1, tie_tol: float = TIE_TOL, groups: list | None = None) -> FitResult:
    """Estimate Q group by group and merge the aligned sub-estimates.

    Parameters
    ----------
    group_size, overlap : int
        Layout described in the module docstring (``overlap`` defaults to
        ``k``).  ``groups`` overrides the layout with explicit item lists.
    max_order : int, optional
        Combination order within each group (saturated by default).
    params : ItemParams, optional
        Known item parameters; otherwise fitted per candidate.
    """
    model = Model.parse(model)
    m = r.m
    if overlap is None:
        overlap = min(k, group_size - 1)
    layout = groups if groups is not None else group_layout(m, group_size, overlap)
    if len(layout) == 1 and sorted(layout[0]) == list(range(m)):
        combos = enumerate_combos(m, max_order or m)
        res = exhaustive_search(r, k, model, None, combos, params, seed, threads, tie_tol=tie_tol)
        res.diagnostics["strategy"] = "split"
        res.diagnostics["groups"] = layout
        return res

    subs = []
    for items in layout:
        combos = enumerate_combos(len(items), min(max_order or len(items), len(items)))
        sub_params = params.subset(items) if params is not None else None
        subs.append(exhaustive_search(r.items(items), k, model, None, combos, sub_params, seed, threads,
                                      tie_tol=tie_tol))

    align_info = []
    for g in range(1, len(layout)):
        items = layout[g]
        shared = [i for i in items if any(i in layout[h] for h in range(g))]
        if shared:
            ref = _reference_rows(layout, subs, shared, g, align_info)
            mine = np.array([subs[g].q_hat.entries[items.index(i)] for i in shared])
            perm, agree, ambiguous = align_columns(ref, mine)
            if agree < MIN_AGREEMENT:
                raise AlignmentError(
                    f"group {g} agrees with the reference on only {agree:.0%} of shared entries",
                    subs[0], subs[g])
            mode = "overlap"
        else:
            perm, agree, ambiguous, mode = list(range(k)), None, False, "canonical-order-only"
        align_info.append({"group": g, "mode": mode, "permutation": perm, "agreement": agree,
                           "ambiguous": ambiguous})

    tied = [[(sub.q_hat.entries.astype(np.int8), sub.score)]
            + [(q.entries.astype(np.int8), sc) for q, sc in sub.near_ties[:MAX_TIED_PER_GROUP - 1]]
            for sub in subs]
    assembled = _assemble(layout, tied, align_info, m, k)
    if len(assembled) > 1:
        stack = np.array(assembled, dtype=np.int8)
        mv = _moments(r, None, model, None)
        system = MomentSystem(mv, model, k)
        if params is not None:
            scores, _ = _score_fixed(system, stack, params, threads)
        else:
            scores = _score_fitted(system, stack, seed, threads)[0]
        lex = np.empty(stack.shape[0], dtype=np.int64)
        lex[_lex_rank(_canonical_stack(stack))] = np.arange(stack.shape[0])
        fixed = QMatrix(stack[int(np.lexsort((lex, scores))[0])])
    else:
        fixed = QMatrix(assembled[0])
    final = exhaustive_search(r, k, model, SearchConstraints(known=fixed), None, params, seed, threads,
                              tie_tol=tie_tol)
    diag = dict(final.diagnostics)
    diag.update({
        "strategy": "split",
        "groups": layout,
        "group_scores": [s.score for s in subs],
        "group_ties": [len(t) for t in tied],
        "assembled_candidates": len(assembled),
        "alignment": align_info,
        "alignment_by_canonical_order_only": any(a["mode"] == "canonical-order-only" for a in align_info),
        "candidates_evaluated": sum(s.diagnostics["candidates_evaluated"] for s in subs) + len(assembled),
    })
    perm = canonical_order(fixed)
    q_hat = fixed.permute_columns(perm)
    p_hat = final.p_hat.permute_attributes(perm)
    return FitResult(q_hat, final.params_hat, p_hat, final.score, [], model, diag, final.converged)


def _reference_rows(layout, subs, shared, g, align_info) -> np.ndarray:
    """Rows of ``shared`` items as labelled by the earliest aligned group containing each."""
    out = []
    for i in shared:
        h = next(h for h in range(g) if i in layout[h])
        perm = align_info[h - 1]["permutation"] if h > 0 else None
        row = subs[h].q_hat.entries[layout[h].index(i)]
        out.append(row[perm] if perm is not None else row)
    return np.array(out)


def _assemble(layout, tied, align_info, m: int, k: int) -> list:
    """Distinct full Q-matrices built from one tied sub-estimate per group.

    Group 0 fixes the labels.  Later groups use every permutation that
    maximises agreement with the rows already placed on shared items; with
    no shared items only the primary alignment is used.  Shared rows are
    merged with the usual conflict rule.  The first entry is the primary
    assembly from each group's best sub-estimate.
    """
    seen, out = set(), []
    for choice in product(*[range(len(t)) for t in tied]):
        options = [[tied[0][choice[0]]]]
        for g in range(1, len(layout)):
            rows_g, score_g = tied[g][choice[g]]
            placed = {}
            for h in range(g):
                for t, i in enumerate(layout[h]):
                    placed.setdefault(i, options[h][0][0][t])
            shared = [i for i in layout[g] if i in placed]
            if shared and align_info[g - 1]["mode"] == "overlap":
                ref = np.array([placed[i] for i in shared])
                mine = np.array([rows_g[layout[g].index(i)] for i in shared])
                perms = _best_perms(ref, mine)
            else:
                perms = [align_info[g - 1]["permutation"]]
            options.append([(rows_g[:, perm], score_g) for perm in perms])
        for pick in product(*[range(len(o)) for o in options]):
            rows = {}
            for g, idx in enumerate(pick):
                sub_rows, sub_score = options[g][idx]
                for t, i in enumerate(layout[g]):
                    rows.setdefault(i, []).append((sub_rows[t], sub_score))
            merged = np.array([_merge_row(rows[i]) for i in range(m)], dtype=np.int8)
            key = merged.tobytes()
            if key not in seen:
                seen.add(key)
                out.append(merged)
                if len(out) >= MAX_ASSEMBLED:
                    return out
    return out

from __future__ import annotations

import numpy as np

from .. import _kernels
from ..core import ItemParams, Model, QMatrix, profile_table
from ..moments import MomentVector
from ..simplex import min_residual

ACTIVE_SET_TOL = 1e-12


class MomentSystem:
    """A moment vector prepared for repeated scoring of candidate Q-matrices."""

    def __init__(self, moments: MomentVector, model, k: int):
        self.model = Model.parse(model)
        if self.model.kind != moments.kind:
            raise ValueError(f"{self.model.value} needs {self.model.kind} moments, got {moments.kind}")
        self.moments = moments
        self.k = k
        self.m = moments.combos.m
        items, lens = moments.combos.item_table
        self.items = np.ascontiguousarray(items)
        self.lens = np.ascontiguousarray(lens)
        vals = np.asarray(moments.values, dtype=float)
        self.target = np.ascontiguousarray(vals if self.model is Model.DINA else 1.0 - vals)
        self.dino = self.model is Model.DINO
        self.bits = np.ascontiguousarray(profile_table(k))
        self.n_profiles = 1 << k
        self.max_iter = 10 * self.n_profiles + 50

    def lohi(self, c, g):
        if self.dino:
            return np.ascontiguousarray(1.0 - g), np.ascontiguousarray(1.0 - c)
        return np.ascontiguousarray(g, dtype=float), np.ascontiguousarray(c, dtype=float)

    def xi(self, q: QMatrix) -> np.ndarray:
        return _kernels.capability(np.ascontiguousarray(q.entries), self.bits, self.dino)

    def solve(self, q: QMatrix, params: ItemParams):
        """``(p, residual, converged)`` for one candidate at fixed parameters."""
        lo, hi = self.lohi(params.c, params.g)
        T = np.empty((len(self.target), self.n_profiles))
        _kernels.design(self.xi(q), lo, hi, self.items, self.lens, T)
        p, res, _, conv = _kernels.solve_system(T, self.target, -np.ones(self.n_profiles), self.max_iter, ACTIVE_SET_TOL)
        if not conv:
            sol = min_residual(T, self.target, p0=p, method="apg")
            if sol.residual < res:
                p, res = sol.p, sol.residual
            conv = sol.converged
        return p, float(res), bool(conv)

    def batch(self, cands: np.ndarray, params: ItemParams):
        """Scores of a stack of candidate entry matrices ``(n, m, k)`` at fixed parameters."""
        lo, hi = self.lohi(params.c, params.g)
        scores = np.empty(cands.shape[0])
        conv = np.empty(cands.shape[0], dtype=np.bool_)
        _kernels.batch_scores(np.ascontiguousarray(cands, dtype=np.int8), self.bits, self.dino, lo, hi,
                              self.items, self.lens, self.target, self.max_iter, ACTIVE_SET_TOL, scores, conv)
        for i in np.flatnonzero(~conv):
            _, scores[i], conv[i] = self.solve(QMatrix(cands[i]), params)
        return scores, conv

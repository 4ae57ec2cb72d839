"""Item-parameter fitting and attribute-distribution recovery for a given Q."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .. import _kernels
from ..core import AttributeDistribution, ItemParams, Model, QMatrix
from ..moments import MomentVector
from ._system import ACTIVE_SET_TOL, MomentSystem

# uniform (c, g) start points; a seeded random start is added per candidate
FIXED_STARTS = ((0.9, 0.1), (0.75, 0.25), (0.6, 0.3))
MAX_ITER = 500


@dataclass(frozen=True, eq=False)
class ParamFit:
    params: ItemParams
    score: float
    p: np.ndarray
    converged: bool
    evaluations: int


def _to_cg(z, m):
    u, v = z[:m], z[m:]
    return u + (1.0 - u) * v, u.copy()


def _from_cg(c, g):
    u = np.asarray(g, dtype=float)
    room = 1.0 - u
    v = np.divide(c - u, room, out=np.ones_like(u), where=room > 0)
    return np.concatenate([u, np.clip(v, 0.0, 1.0)])


def start_points(q: QMatrix, seed: int):
    m = q.m
    starts = [(np.full(m, c), np.full(m, g)) for c, g in FIXED_STARTS]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, q.row_codes()), m, q.k]))
    g = rng.uniform(0.0, 0.4, m)
    starts.append((rng.uniform(0.6, 1.0, m), g))
    return starts


def fit_params_system(system: MomentSystem, q: QMatrix, seed: int = 0) -> ParamFit:
    """Minimise the moment residual over ``0 <= g <= c <= 1`` for one Q.

    The inner problem over ``p`` is solved exactly at every evaluation and
    the gradient in ``(c, g)`` comes from the envelope theorem.  Parameters
    are mapped to the unit box by ``g = u, c = u + (1 - u) v`` so that the
    ordering constraint is a plain bound constraint for L-BFGS-B.
    """
    m = q.m
    xi = system.xi(q)
    T = np.empty((len(system.target), system.n_profiles))
    gl = np.empty(m)
    gh = np.empty(m)
    p0 = -np.ones(system.n_profiles)
    sign = -1.0 if system.dino else 1.0
    count = [0]
    last = {}

    def fun(z):
        count[0] += 1
        c, g = _to_cg(z, m)
        lo, hi = system.lohi(c, g)
        f, p, conv = _kernels.objective_grad(xi, lo, hi, system.items, system.lens, system.target, p0,
                                             system.max_iter, ACTIVE_SET_TOL, T, gl, gh)
        last["conv"] = conv
        dc = sign * gh
        dg = sign * gl
        u, v = z[:m], z[m:]
        return f, np.concatenate([dg + dc * (1.0 - v), dc * (1.0 - u)])

    best = None
    for c0, g0 in start_points(q, seed):
        z0 = _from_cg(c0, g0)
        f0, _ = fun(z0)
        cand = [(f0, z0)]
        if f0 > 0.0:
            # L-BFGS-B's ftol test is relative to max(|f|, 1), so small residuals need rescaling
            scale = 1.0 / f0

            def scaled(z):
                f, g = fun(z)
                return f * scale, g * scale

            res = minimize(scaled, z0, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * (2 * m),
                           options=dict(maxiter=MAX_ITER, ftol=1e-15, gtol=1e-12, maxcor=20))
            cand.append((float(res.fun) / scale, np.clip(res.x, 0.0, 1.0)))
        for f, z in cand:
            if best is None or f < best[0]:
                best = (f, z)
    c, g = _to_cg(best[1], m)
    params = ItemParams(np.clip(c, 0.0, 1.0), np.clip(g, 0.0, 1.0))
    p, score, conv = system.solve(q, params)
    return ParamFit(params, score, p, conv, count[0])


def fit_item_params(q: QMatrix, moments: MomentVector, model, seed: int = 0):
    """Fitted ``(ItemParams, score)`` minimising the moment loss for ``q``.

    Multi-start local search; ``(c, g)`` need not be identified, only the
    score is guaranteed to be no worse than at any start point.
    """
    fit = fit_params_system(MomentSystem(moments, model, q.k), q, seed)
    return fit.params, fit.score


def estimate_p(q: QMatrix, params: ItemParams, moments: MomentVector, model) -> AttributeDistribution:
    """Attribute distribution minimising the moment residual for fixed ``(q, c, g)``."""
    p, _, _ = MomentSystem(moments, Model.parse(model), q.k).solve(q, params)
    return AttributeDistribution.from_weights(p)

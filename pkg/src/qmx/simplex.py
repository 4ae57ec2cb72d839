"""Least squares over the probability simplex.

Solves ``min_p |M p - v|`` subject to ``p >= 0`` and ``sum(p) = 1``.  The
default solver is a primal active-set method on the Gram form
``(M'M, M'v)``, exact for the small column counts (``2^k``) used here.
Accelerated projected gradient with sort-based simplex projection is kept
as a fallback and as an independent second solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import AttributeDistribution, ItemParams, Model, QMatrix
from .errors import ConfigError, DimensionError

KKT_TOL = 1e-6
_ACTIVE_SET_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SimplexLsqSolution:
    p: np.ndarray
    residual: float
    iterations: int
    converged: bool
    method: str = "active-set"
    kkt_violation: float = 0.0

    @property
    def distribution(self) -> AttributeDistribution:
        return AttributeDistribution.from_weights(self.p)


def project_simplex(y) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = 1}`` by sorting."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, y.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


def kkt_certificate(m, v, p, tol: float = KKT_TOL, support_tol: float = 1e-8):
    """Check simplex-constrained stationarity of ``|Mp - v|^2`` at ``p``.

    With ``w = 2 M'(Mp - v)`` a multiplier ``lam`` must satisfy
    ``w_j >= lam - tol`` everywhere and ``|w_j - lam| <= tol`` on the
    support.  Such a ``lam`` exists iff ``max(w[support]) - min(w) <= 2 tol``.
    Returns ``(ok, violation, lam)`` where ``violation`` is that gap.
    """
    m = np.asarray(m, dtype=float)
    p = np.asarray(p, dtype=float)
    w = 2.0 * m.T @ (m @ p - np.asarray(v, dtype=float))
    support = p > support_tol
    if not support.any():
        support = p >= p.max()
    top = float(w[support].max())
    low = float(w.min())
    gap = top - low
    return gap <= 2 * tol, gap, 0.5 * (top + low)


def _power_lipschitz(m: np.ndarray, iters: int = 60) -> float:
    n = m.shape[1]
    x = np.ones(n) / np.sqrt(n)
    s = 0.0
    for _ in range(iters):
        y = m.T @ (m @ x)
        s = float(np.linalg.norm(y))
        if s == 0.0:
            return 1.0
        x = y / s
    return 2.0 * s * 1.01


def _apg(m: np.ndarray, v: np.ndarray, p0: np.ndarray, max_iter: int):
    lip = _power_lipschitz(m)
    x = project_simplex(p0)
    y = x.copy()
    t = 1.0
    fx = float(np.sum((m @ x - v) ** 2))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * m.T @ (m @ y - v)
        x_new = project_simplex(y - grad / lip)
        f_new = float(np.sum((m @ x_new - v) ** 2))
        if f_new > fx:
            # restart momentum from the last accepted point
            y = x.copy()
            t = 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        g_x = 2.0 * m.T @ (m @ x_new - v)
        pg = lip * (x_new - project_simplex(x_new - g_x / lip))
        rel = abs(fx - f_new) / max(fx, 1e-300)
        x, fx, t = x_new, f_new, t_new
        if np.linalg.norm(pg) <= 1e-9 or (rel <= 1e-12 and np.linalg.norm(pg) <= 1e-6):
            converged = True
            break
    return x, it, converged


def min_residual(m, v, p0=None, method: str = "active-set", max_iter: int | None = None) -> SimplexLsqSolution:
    """Minimise ``|m p - v|`` over the probability simplex.

    Parameters
    ----------
    m : array_like, shape (rows, n)
    v : array_like, shape (rows,)
    p0 : array_like, optional
        Warm start; used if it is a feasible point.
    method : {"active-set", "apg"}
        ``"apg"`` forces accelerated projected gradient.  The active-set
        solve falls back to APG when it hits its iteration cap or fails the
        KKT check.

    Returns
    -------
    SimplexLsqSolution
        ``converged`` is False (never raised) when neither solver certifies
        optimality; the best iterate is returned.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if m.ndim != 2 or m.shape[1] < 1:
        raise DimensionError("matrix must have at least one column")
    if v.shape != (m.shape[0],):
        raise DimensionError(f"target has length {v.shape[0]}, matrix has {m.shape[0]} rows")
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
        raise ConfigError("matrix and target must be finite")
    n = m.shape[1]
    start = -np.ones(n) if p0 is None else np.asarray(getattr(p0, "p", p0), dtype=float)
    if start.shape != (n,):
        raise DimensionError("warm start has the wrong length")
    rows = max(m.shape[0], 1)
    if max_iter is None:
        max_iter = int(50 * n * np.sqrt(rows)) + 100

    if method == "active-set":
        mc = np.ascontiguousarray(m)
        p, res, it, conv = _kernels.solve_system(mc, np.ascontiguousarray(v), start, 10 * n + 50, _ACTIVE_SET_TOL)
        ok, gap, _ = kkt_certificate(m, v, p)
        if conv and ok:
            return SimplexLsqSolution(p, float(res), int(it), True, "active-set", gap)
        start = p
    elif method != "apg":
        raise ConfigError(f"unknown method {method!r}")

    if start.min() < 0 or abs(start.sum() - 1) > 1e-9:
        start = np.full(n, 1.0 / n)
    p, it, conv = _apg(m, v, start, max_iter)
    ok, gap, _ = kkt_certificate(m, v, p)
    res = float(np.linalg.norm(m @ p - v))
    return SimplexLsqSolution(p, res, int(it), bool(conv and ok), "apg", gap)


def score(q: QMatrix, params: ItemParams, moments, model=None) -> float:
    """Moment-matching loss: ``S_{c,g}`` for DINA (AND moments), ``V_{c,g}`` for DINO (OR moments)."""
    from .tmatrix import build_moment_matrix

    if model is None:
        model = Model.DINA if moments.kind == "AND" else Model.DINO
    model = Model.parse(model)
    if model.kind != moments.kind:
        raise ConfigError(f"{model.value} needs {model.kind} moments, got {moments.kind}")
    mat = build_moment_matrix(q, params, moments.combos, model)
    return min_residual(mat.rows, moments.values).residual

"""Compiled inner loops for the candidate search.

All routines work on the "AND form" of a moment system: row ``S`` of the
design matrix is ``prod_{i in S} (lo_i + (hi_i - lo_i) * xi[i, a])``.
DINA uses ``lo = g, hi = c`` against the alpha moments.  DINO uses
``lo = 1 - g, hi = 1 - c`` against ``1 - beta``; because feasible ``p``
sums to one this has exactly the residual of the U-matrix system.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def capability(q, bits, dino):
    m, k = q.shape
    n = bits.shape[0]
    xi = np.zeros((m, n))
    for i in range(m):
        for a in range(n):
            if dino:
                hit = 0
                for j in range(k):
                    if q[i, j] == 1 and bits[a, j] == 1:
                        hit = 1
                        break
                xi[i, a] = hit
            else:
                ok = 1
                for j in range(k):
                    if q[i, j] == 1 and bits[a, j] == 0:
                        ok = 0
                        break
                xi[i, a] = ok
    return xi


@njit(**_JIT)
def design(xi, lo, hi, items, lens, out):
    rows = items.shape[0]
    n = xi.shape[1]
    for r in range(rows):
        for a in range(n):
            v = 1.0
            for t in range(lens[r]):
                i = items[r, t]
                v *= lo[i] + (hi[i] - lo[i]) * xi[i, a]
            out[r, a] = v


# Face steps below this size are rounding noise from the KKT solve; p lives in [0, 1].
STEP_TOL = 1e-11


@njit(**_JIT)
def simplex_qp(G, h, p0, max_iter, tol):
    """Primal active-set solve of ``min 0.5 p'Gp - h'p`` over the probability simplex.

    Returns ``(p, iterations, converged)``.  ``p0`` seeds the free set when
    it is feasible; otherwise the best vertex is used.
    """
    n = G.shape[0]
    p = np.zeros(n)
    free = np.zeros(n, dtype=np.bool_)
    s0 = 0.0
    ok0 = True
    for j in range(n):
        if p0[j] < 0.0:
            ok0 = False
        s0 += p0[j]
    if ok0 and abs(s0 - 1.0) < 1e-9 and n > 0:
        for j in range(n):
            if p0[j] > 0.0:
                p[j] = p0[j] / s0
                free[j] = True
    else:
        best = 0
        bv = np.inf
        for j in range(n):
            v = 0.5 * G[j, j] - h[j]
            if v < bv:
                bv = v
                best = j
        p[best] = 1.0
        free[best] = True

    scale = 1.0
    for i in range(n):
        if abs(h[i]) > scale:
            scale = abs(h[i])
        for j in range(n):
            if abs(G[i, j]) > scale:
                scale = abs(G[i, j])
    ktol = tol * scale

    it = 0
    converged = False
    F = np.empty(n, dtype=np.int64)
    while it < max_iter:
        it += 1
        grad = G @ p - h
        nf = 0
        for j in range(n):
            if free[j]:
                F[nf] = j
                nf += 1
        K = np.zeros((nf + 1, nf + 1))
        rhs = np.zeros(nf + 1)
        for a in range(nf):
            for b in range(nf):
                K[a, b] = G[F[a], F[b]]
            K[a, nf] = 1.0
            K[nf, a] = 1.0
            rhs[a] = -grad[F[a]]
        sol = np.linalg.lstsq(K, rhs)[0]
        dmax = 0.0
        for a in range(nf):
            if abs(sol[a]) > dmax:
                dmax = abs(sol[a])
        if dmax <= STEP_TOL:
            gm = 0.0
            for a in range(nf):
                gm += grad[F[a]]
            gm /= nf
            worst = -1
            wv = -ktol
            for j in range(n):
                if not free[j]:
                    mu = grad[j] - gm
                    if mu < wv:
                        wv = mu
                        worst = j
            if worst < 0:
                converged = True
                break
            free[worst] = True
            continue
        alpha = 1.0
        block = -1
        for a in range(nf):
            d = sol[a]
            if d < 0.0:
                r = p[F[a]] / (-d)
                if r < alpha:
                    alpha = r
                    block = F[a]
        for a in range(nf):
            p[F[a]] += alpha * sol[a]
        if block >= 0:
            p[block] = 0.0
            free[block] = False
        s = 0.0
        for j in range(n):
            if p[j] < 0.0 or not free[j]:
                p[j] = 0.0
            s += p[j]
        for j in range(n):
            p[j] /= s
    return p, it, converged


@njit(**_JIT)
def residual(T, p, target):
    s = 0.0
    for r in range(T.shape[0]):
        v = -target[r]
        for a in range(T.shape[1]):
            v += T[r, a] * p[a]
        s += v * v
    return np.sqrt(s)


@njit(**_JIT)
def solve_system(T, target, p0, max_iter, tol):
    G = T.T @ T
    h = T.T @ target
    p, it, conv = simplex_qp(G, h, p0, max_iter, tol)
    return p, residual(T, p, target), it, conv


@njit(**_JIT)
def objective_grad(xi, lo, hi, items, lens, target, p0, max_iter, tol, T, grad_lo, grad_hi):
    """Squared residual at the inner optimum and its gradient in ``(lo, hi)``.

    The inner minimiser ``p*`` does not move the value to first order, so the
    gradient is ``2 r' (dT/dtheta) p*``.
    """
    design(xi, lo, hi, items, lens, T)
    G = T.T @ T
    h = T.T @ target
    p, it, conv = simplex_qp(G, h, p0, max_iter, tol)
    rows = T.shape[0]
    n = T.shape[1]
    r = T @ p - target
    f = 0.0
    for i in range(rows):
        f += r[i] * r[i]
    grad_lo[:] = 0.0
    grad_hi[:] = 0.0
    others = np.empty(n)
    for row in range(rows):
        if r[row] == 0.0:
            continue
        L = lens[row]
        for t in range(L):
            i = items[row, t]
            for a in range(n):
                v = 1.0
                for u in range(L):
                    if u != t:
                        j = items[row, u]
                        v *= lo[j] + (hi[j] - lo[j]) * xi[j, a]
                others[a] = v
            sh = 0.0
            sl = 0.0
            for a in range(n):
                w = others[a] * p[a]
                sh += xi[i, a] * w
                sl += (1.0 - xi[i, a]) * w
            grad_hi[i] += 2.0 * r[row] * sh
            grad_lo[i] += 2.0 * r[row] * sl
    return f, p, conv


@njit(**_JIT)
def batch_scores(cands, bits, dino, lo, hi, items, lens, target, max_iter, tol, scores, conv):
    nc = cands.shape[0]
    n = bits.shape[0]
    T = np.empty((items.shape[0], n))
    p0 = -np.ones(n)
    for c in range(nc):
        xi = capability(cands[c], bits, dino)
        design(xi, lo, hi, items, lens, T)
        p, s, it, ok = solve_system(T, target, p0, max_iter, tol)
        scores[c] = s
        conv[c] = ok

"""Independent reference implementations used as test oracles.

Nothing here imports the package's T-matrix, moment or solver code; the
oracles work from the response laws and plain linear algebra.
"""

from __future__ import annotations

from itertools import combinations, product

import numpy as np


def bits_of(index: int, k: int) -> tuple:
    return tuple((index >> j) & 1 for j in range(k))


def xi_dina(bits, row) -> int:
    return int(all(a >= q for a, q in zip(bits, row)))


def xi_dino(bits, row) -> int:
    return int(any(a == 1 and q == 1 for a, q in zip(bits, row)))


def response_prob(bits, row, c, g, model) -> float:
    xi = xi_dina(bits, row) if model == "dina" else xi_dino(bits, row)
    return c if xi else g


def and_prob(q, p, c, g, items, model="dina") -> float:
    """P(all items in ``items`` answered 1) by summing over every profile."""
    k = len(q[0])
    total = 0.0
    for a in range(1 << k):
        b = bits_of(a, k)
        pr = 1.0
        for i in items:
            pr *= response_prob(b, q[i], c[i], g[i], model)
        total += p[a] * pr
    return total


def or_prob(q, p, c, g, items, model="dino") -> float:
    """P(at least one item in ``items`` answered 1) by inclusion-exclusion."""
    total = 0.0
    items = list(items)
    for size in range(1, len(items) + 1):
        for sub in combinations(items, size):
            total += (-1) ** (size + 1) * and_prob(q, p, c, g, sub, model)
    return total


def subsets_by_size(m: int):
    """All nonempty subsets of range(m) ordered by (size, bitmask)."""
    out = []
    for size in range(1, m + 1):
        subs = [s for s in combinations(range(m), size)]
        out.extend(sorted(subs, key=lambda s: sum(1 << i for i in s)))
    return out


def simplex_grid(n: int, steps: int) -> np.ndarray:
    """All points of the simplex in R^n with coordinates in multiples of 1/steps."""
    if n == 1:
        return np.ones((1, 1))
    head = np.indices((steps + 1,) * (n - 1)).reshape(n - 1, -1).T
    head = head[head.sum(axis=1) <= steps]
    return np.column_stack([head, steps - head.sum(axis=1)]).astype(float) / steps


def grid_min_residual(m, v, step: float = 0.01, fine: float = 0.001):
    """Brute force over a simplex grid, then a finer grid around the incumbent."""
    m = np.asarray(m, float)
    v = np.asarray(v, float)
    n = m.shape[1]
    pts = simplex_grid(n, int(round(1 / step)))
    res = np.linalg.norm(pts @ m.T - v, axis=1)
    best = pts[np.argmin(res)]
    if n == 1:
        return float(res.min())
    half = int(round(step / fine))
    offs = np.indices((2 * half + 1,) * (n - 1)).reshape(n - 1, -1).T - half
    cand = np.empty((offs.shape[0], n))
    cand[:, :-1] = best[:-1] + offs * fine
    cand[:, -1] = 1.0 - cand[:, :-1].sum(axis=1)
    cand = cand[cand.min(axis=1) >= -1e-12].clip(0, None)
    fres = np.linalg.norm(cand @ m.T - v, axis=1)
    return float(min(res.min(), fres.min()))


def face_min_residual(m, v) -> float:
    """Exact optimum: affine-constrained least squares on every face of the simplex."""
    m = np.asarray(m, float)
    v = np.asarray(v, float)
    n = m.shape[1]
    best = np.inf
    for size in range(1, n + 1):
        for support in combinations(range(n), size):
            ms = m[:, support]
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = 2 * ms.T @ ms
            kkt[:size, size] = 1
            kkt[size, :size] = 1
            rhs = np.concatenate([2 * ms.T @ v, [1.0]])
            x = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:size]
            if x.min() < -1e-10 or abs(x.sum() - 1) > 1e-8:
                continue
            best = min(best, float(np.linalg.norm(ms @ x - v)))
    return best


def random_complete_q(rng, m: int, k: int, min_per_attribute: int = 1, allow_zero_rows: bool = False):
    """Q with an identity block (rows shuffled) and random remaining rows."""
    while True:
        rows = np.vstack([np.eye(k, dtype=np.int8), rng.integers(0, 2, (m - k, k)).astype(np.int8)])
        if not allow_zero_rows and not rows.any(axis=1).all():
            continue
        if (rows.sum(axis=0) >= min_per_attribute).all():
            return rows[rng.permutation(m)]


def diversified_p(rng, k: int, floor: float = 0.05) -> np.ndarray:
    n = 1 << k
    return floor + (1 - floor * n) * rng.dirichlet(np.ones(n))

"""Synthetic DINA/DINO response data.

Subjects are generated in fixed-size chunks.  Chunk ``j`` draws from its
own Philox (counter-based) stream keyed by ``(seed, j)``, so the output
does not depend on how chunks are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import AttributeDistribution, ItemParams, Model, QMatrix, ResponseMatrix, capability_matrix
from .errors import ConfigError, DimensionError

RNG_NAME = "numpy-philox4x64/seedseq(seed,chunk)/v1"
CHUNK = 4096


@dataclass(frozen=True, eq=False)
class SimConfig:
    q: QMatrix
    p: AttributeDistribution
    params: ItemParams
    n: int
    model: Model = Model.DINA
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", Model.parse(self.model))
        if not isinstance(self.p, AttributeDistribution):
            object.__setattr__(self, "p", AttributeDistribution(self.p))
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("n must be ≥ 1", key="n")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", key="seed")
        if not self.q.fully_known:
            raise ConfigError("simulation needs a fully specified Q-matrix", key="q")
        if self.params.m != self.q.m:
            raise DimensionError(f"params cover {self.params.m} items, Q has m={self.q.m}")
        if self.p.k != self.q.k:
            raise DimensionError(f"distribution is over k={self.p.k} attributes, Q has k={self.q.k}")


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk)])))


def _chunk(cfg: SimConfig, cdf: np.ndarray, prob: np.ndarray, j: int, size: int):
    rng = chunk_rng(cfg.seed, j)
    u = rng.random(size)
    prof = np.searchsorted(cdf, u, side="right")
    resp = (rng.random((size, cfg.q.m)) < prob[prof]).astype(np.int8)
    return prof, resp


def simulate(cfg: SimConfig, threads: int = 1) -> ResponseMatrix:
    """Draw ``n`` profiles from ``p`` and Bernoulli responses with probability ``c_i`` or ``g_i``."""
    xi = capability_matrix(cfg.q, cfg.model).astype(float)  # m x 2^k
    prob = (cfg.params.g[:, None] + (cfg.params.c - cfg.params.g)[:, None] * xi).T  # 2^k x m
    cdf = np.cumsum(cfg.p.p)
    # last positive-mass profile absorbs u >= cdf[-1] caused by rounding; zero-mass
    # profiles are empty intervals under side="right"
    last = int(np.nonzero(cfg.p.p > 0)[0][-1])
    cdf[last:] = np.inf
    sizes = [min(CHUNK, cfg.n - lo) for lo in range(0, cfg.n, CHUNK)]
    jobs = list(enumerate(sizes))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda js: _chunk(cfg, cdf, prob, *js), jobs))
    else:
        parts = [_chunk(cfg, cdf, prob, j, s) for j, s in jobs]
    latent = np.concatenate([a for a, _ in parts])
    data = np.concatenate([b for _, b in parts])
    return ResponseMatrix(data, latent)

"""Parametric-bootstrap reference distribution for the moment residual of a given Q."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import AttributeDistribution, ItemParams, Model, QMatrix, ResponseMatrix
from ..errors import ConfigError
from ..moments import moment_vector
from ..simulate import SimConfig, simulate
from ..tmatrix import ComboSet, default_combos
from ._system import MomentSystem
from .params import fit_params_system

VALIDATION_SCHEMA = "qmx.validation/1"
LOW_POWER_N = 100


@dataclass(frozen=True, eq=False)
class ValidationReport:
    """Observed residual against its simulated reference distribution.

    ``exceedance`` is the fraction of reference replicates whose statistic
    is at least ``s_obs``.  It is a Monte Carlo summary only; no level or
    p-value interpretation is attached.
    """

    s_obs: float
    reference: np.ndarray
    params_hat: ItemParams
    p_hat: AttributeDistribution
    model: Model
    sample_size: int
    seed: int

    @property
    def quantiles(self) -> dict:
        lo, mid, hi = np.quantile(self.reference, [0.025, 0.5, 0.975])
        return {"q025": float(lo), "q50": float(mid), "q975": float(hi)}

    @property
    def exceedance(self) -> float:
        return float(np.mean(self.reference >= self.s_obs))

    @property
    def inside_central_band(self) -> bool:
        q = self.quantiles
        return q["q025"] <= self.s_obs <= q["q975"]

    @property
    def exceeds_max(self) -> bool:
        return bool(self.s_obs > self.reference.max())

    @property
    def low_power(self) -> bool:
        return self.sample_size < LOW_POWER_N

    def to_dict(self) -> dict:
        return {
            "schema_version": VALIDATION_SCHEMA,
            "model": self.model.value,
            "s_obs": float(self.s_obs),
            "n_reference": int(self.reference.size),
            "reference": {**self.quantiles, "min": float(self.reference.min()),
                          "max": float(self.reference.max())},
            "exceedance": self.exceedance,
            "inside_central_band": self.inside_central_band,
            "exceeds_max": self.exceeds_max,
            "low_power": self.low_power,
            "sample_size": int(self.sample_size),
            "params": {"c": self.params_hat.c.tolist(), "g": self.params_hat.g.tolist()},
            "p_hat": self.p_hat.p.tolist(),
            "seed": int(self.seed),
        }


def _statistic(q: QMatrix, r: ResponseMatrix, combos: ComboSet, model: Model, seed: int):
    system = MomentSystem(moment_vector(r, combos, model), model, q.k)
    return fit_params_system(system, q, seed)


def validate_q(q: QMatrix, r: ResponseMatrix, model="dina", combos: ComboSet | None = None,
               n_reference: int = 99, seed: int = 0) -> ValidationReport:
    """Compare the fitted moment residual of ``q`` with parametric re-simulations.

    The statistic is the residual after fitting ``(c, g)`` and ``p`` for
    ``q``.  Reference replicates are simulated at the fitted values with the
    same sample size, and the same statistic is recomputed on each.
    """
    model = Model.parse(model)
    if not q.fully_known:
        raise ConfigError("validation needs a fully specified Q-matrix")
    if n_reference < 1:
        raise ConfigError("n_reference must be ≥ 1", key="n_reference")
    combos = combos or default_combos(q.m)
    obs = _statistic(q, r, combos, model, seed)
    p_hat = AttributeDistribution.from_weights(obs.p)
    ref = np.empty(n_reference)
    for b in range(n_reference):
        child = int(np.random.SeedSequence([int(seed), b]).generate_state(1, np.uint64)[0])
        rb = simulate(SimConfig(q, p_hat, obs.params, r.n, model, child))
        ref[b] = _statistic(q, rb, combos, model, seed).score
    return ValidationReport(float(obs.score), ref, obs.params, p_hat, model, r.n, int(seed))

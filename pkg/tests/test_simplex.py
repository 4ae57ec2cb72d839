import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmx import (
    AttributeDistribution,
    ConfigError,
    DimensionError,
    ItemParams,
    QMatrix,
    SimConfig,
    build_T,
    enumerate_combos,
    kkt_certificate,
    min_residual,
    moment_vector,
    score,
    simulate,
)
from qmx.simplex import project_simplex

from oracles import face_min_residual

NUM = np.array([[0, 1, 0, 1], [0, 0, 1, 1], [0, 0, 0, 1]], dtype=float)


def test_feasible_target_is_reproduced():
    sol = min_residual(np.eye(2), [0.3, 0.7])
    assert np.allclose(sol.p, [0.3, 0.7])
    assert sol.residual < 1e-12 and sol.converged


def test_projection_of_ones():
    sol = min_residual(np.eye(2), [1.0, 1.0])
    assert np.allclose(sol.p, [0.5, 0.5])
    assert sol.residual == pytest.approx(np.sqrt(0.5), abs=1e-12)


def test_worked_example_system_with_zero_column():
    v = NUM @ np.array([0.1, 0.2, 0.3, 0.4])
    sol = min_residual(NUM, v)
    assert sol.residual < 1e-10
    assert np.allclose(NUM @ sol.p, v, atol=1e-10)


def test_apg_agrees_with_active_set():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = rng.uniform(0, 1, (10, 8))
        v = rng.uniform(0, 1, 10)
        a = min_residual(m, v)
        b = min_residual(m, v, method="apg")
        assert b.method == "apg"
        assert b.residual == pytest.approx(a.residual, abs=1e-6)


def test_input_validation():
    with pytest.raises(DimensionError):
        min_residual(np.eye(2), [1.0, 1.0, 1.0])
    with pytest.raises(ConfigError):
        min_residual(np.eye(2), [np.nan, 1.0])
    with pytest.raises(ConfigError):
        min_residual(np.eye(2), [0.5, 0.5], method="newton")
    with pytest.raises(DimensionError):
        min_residual(np.eye(2), [0.5, 0.5], p0=[1.0])


def test_warm_start_accepted():
    sol = min_residual(np.eye(3), [0.2, 0.3, 0.5], p0=[1 / 3, 1 / 3, 1 / 3])
    assert np.allclose(sol.p, [0.2, 0.3, 0.5])


def test_project_simplex():
    assert np.allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])
    assert np.allclose(project_simplex([0.5, 0.5, 0.5]), [1 / 3] * 3)


def _instance(seed):
    rng = np.random.default_rng(seed)
    rows = int(rng.integers(1, 25))
    cols = int(rng.integers(1, 9))
    return rng.normal(size=(rows, cols)), rng.normal(size=rows)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solution_is_feasible_stationary_and_optimal(seed):
    m, v = _instance(seed)
    sol = min_residual(m, v)
    assert sol.p.min() >= -1e-10 and abs(sol.p.sum() - 1) <= 1e-10
    assert sol.residual == pytest.approx(np.linalg.norm(m @ sol.p - v), abs=1e-12)
    if sol.converged:
        ok, gap, _ = kkt_certificate(m, v, sol.p)
        assert ok, gap
    assert sol.residual <= face_min_residual(m, v) + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_residual_convex_along_segments(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(6, 4))
    v = rng.normal(size=6)
    a, b = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    f = lambda x: np.linalg.norm(m @ x - v)
    assert f(0.5 * (a + b)) <= max(f(a), f(b)) + 1e-12


def _example_data(n=2000, seed=3):
    q = QMatrix.from_rows([[1, 0], [0, 1], [1, 1]])
    r = simulate(SimConfig(q, AttributeDistribution([0.1, 0.2, 0.3, 0.4]), ItemParams.uniform(3, 1, 0), n, seed=seed))
    return q, r


def test_score_noise_free_truth_is_zero():
    q, r = _example_data()
    mv = moment_vector(r, enumerate_combos(3, 3), "dina")
    assert score(q, ItemParams.uniform(3, 1, 0), mv) <= 1e-10


def test_score_flipped_entry_is_positive():
    q, r = _example_data()
    mv = moment_vector(r, enumerate_combos(3, 3), "dina")
    for i in range(3):
        for j in range(2):
            e = q.entries.copy()
            e[i, j] ^= 1
            assert score(QMatrix(e), ItemParams.uniform(3, 1, 0), mv) > 1e-3


def test_score_without_separation_is_mean_projection():
    q, r = _example_data()
    mv = moment_vector(r, enumerate_combos(3, 3), "dina")
    params = ItemParams.uniform(3, 0.4, 0.4)
    t = build_T(q, params, mv.combos).rows
    assert np.allclose(t, t[:, :1])  # every column equal: the system has rank one
    col = t[:, 0]
    assert score(q, params, mv) == pytest.approx(np.linalg.norm(col - mv.values), abs=1e-12)


def test_score_rejects_wrong_moment_kind():
    q, r = _example_data()
    mv = moment_vector(r, enumerate_combos(3, 3), "dino")
    with pytest.raises(ConfigError):
        score(q, ItemParams.uniform(3, 1, 0), mv, "dina")


def test_score_monotone_in_combos():
    rng = np.random.default_rng(11)
    q, r = _example_data(500, 4)
    params = ItemParams.uniform(3, 0.9, 0.1)
    small = moment_vector(r, enumerate_combos(3, 1), "dina")
    large = moment_vector(r, enumerate_combos(3, 3), "dina")
    for _ in range(20):
        cand = QMatrix(rng.integers(0, 2, (3, 2)))
        assert score(cand, params, small) <= score(cand, params, large) + 1e-10

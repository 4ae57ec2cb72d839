"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also repeated in the terminal summary.
"""

import json
import time
import timeit
import warnings
from functools import cache
from itertools import combinations, combinations_with_replacement

import jsonschema
import numpy as np
from scipy import stats

from qmx import (
    AttributeDistribution,
    ComboSet,
    ItemParams,
    QMatrix,
    SimConfig,
    build_T,
    build_U,
    default_combos,
    duality_check,
    enumerate_combos,
    equivalent,
    kkt_certificate,
    min_residual,
    moment_vector,
    score,
    simulate,
)
from qmx.cli import main as cli_main
from qmx.estimation import (
    SearchConstraints,
    anchored_search,
    exhaustive_search,
    fit_item_params,
    search_q,
    split_merge,
    validate_q,
)
from qmx.io import load_schema, write_q
from qmx.tmatrix import augment_ones, subset_mask

from conftest import ACCEPTANCE_LINES
from oracles import (
    and_prob,
    diversified_p,
    face_min_residual,
    grid_min_residual,
    or_prob,
    random_complete_q,
    subsets_by_size,
)

EXAMPLE_Q = QMatrix.from_rows([[1, 0], [0, 1], [1, 1]])
NUM = [[0, 1, 0, 1], [0, 0, 1, 1], [0, 0, 0, 1]]
NEW_T = NUM + [[0, 0, 0, 1]]
NS = (250, 1000, 4000)
SEEDS = 50


def report(n: int, ok: bool, detail: str, elapsed: float) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s]"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_criterion_01_worked_example():
    t0 = time.perf_counter()
    ones = ItemParams.uniform(3, 1.0, 0.0)
    singles = build_T(EXAMPLE_Q, ones, enumerate_combos(3, 1)).rows.tolist()
    pair_combos = ComboSet((1, 2, 4, 3), 3, 2)
    with_pair = build_T(EXAMPLE_Q, ones, pair_combos).rows.tolist()
    per_call = min(timeit.repeat(lambda: build_T(EXAMPLE_Q, ones, pair_combos), number=1, repeat=50))
    ok = singles == NUM and with_pair == NEW_T and per_call < 1e-3
    report(1, ok, f"exact match, build_T {per_call * 1e6:.0f}us", time.perf_counter() - t0)
    assert ok


def test_criterion_02_duality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(1000):
        m, k = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        bad += not duality_check(QMatrix(rng.integers(0, 2, (m, k))), enumerate_combos(m, m))
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 10
    report(2, ok, f"{1000 - bad}/1000 exact", elapsed)
    assert ok


def _complete_q_classes(m: int, k: int):
    """Every complete Q up to item order: the unit rows plus any multiset of other rows."""
    units = [1 << j for j in range(k)]
    for rest in combinations_with_replacement(range(1 << k), m - k):
        yield np.array([[(x >> j) & 1 for j in range(k)] for x in units + list(rest)], dtype=np.int8)


def test_criterion_03_rank_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    checked = failures = 0
    for k in range(1, 4):
        prop1_masks = tuple(sorted((subset_mask(s) for n in range(1, k + 1) for s in combinations(range(k), n)),
                                   key=lambda x: (bin(x).count("1"), x)))
        for m in range(k, 6):
            for rows in _complete_q_classes(m, k):
                q = QMatrix(rows)
                binary = build_T(q, ItemParams.uniform(m, 1, 0), ComboSet(prop1_masks, m, k)).rows[:, 1:]
                failures += int((np.linalg.svd(binary, compute_uv=False) > 1e-8).sum() != (1 << k) - 1)
                combos = enumerate_combos(m, m)
                for _ in range(100):
                    g = rng.uniform(0, 0.9, m)
                    c = g + rng.uniform(0.1, 1 - g)
                    t = augment_ones(build_T(q, ItemParams(c, g), combos)).rows
                    failures += int((np.linalg.svd(t, compute_uv=False) > 1e-8).sum() != 1 << k)
                checked += 1
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 30
    report(3, ok, f"{checked} Q classes x 100 (c,g), {failures} rank failures", elapsed)
    assert ok


def test_criterion_04_inner_solver_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst_grid = worst_face = 0.0
    kkt_fail = grid_checked = 0
    for i in range(200):
        cols = int(rng.integers(1, 9))
        rows = int(rng.integers(1, 16))
        mat = rng.uniform(0, 1, (rows, cols))
        if i % 2:
            v = mat @ rng.dirichlet(np.ones(cols)) + rng.normal(0, 0.05, rows)
        else:
            v = rng.uniform(0, 1, rows)
        sol = min_residual(mat, v)
        ok_kkt, _, _ = kkt_certificate(mat, v, sol.p)
        kkt_fail += not ok_kkt
        worst_face = max(worst_face, abs(sol.residual - face_min_residual(mat, v)))
        if cols <= 4:
            grid_checked += 1
            worst_grid = max(worst_grid, abs(sol.residual - grid_min_residual(mat, v)))
    elapsed = time.perf_counter() - t0
    ok = worst_grid <= 1e-3 and worst_face <= 1e-3 and kkt_fail == 0 and elapsed < 60
    report(4, ok, f"grid gap {worst_grid:.1e} on {grid_checked}, exact-face gap {worst_face:.1e} on 200, "
                  f"{kkt_fail} KKT failures", elapsed)
    assert ok


def test_criterion_05_population_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    count = 0
    for m in range(1, 6):
        for k in range(1, 4):
            combos = enumerate_combos(m, m)
            subs = subsets_by_size(m)
            for _ in range(50):
                q = rng.integers(0, 2, (m, k))
                p = rng.dirichlet(np.ones(1 << k))
                c, g = rng.uniform(0, 1, m), rng.uniform(0, 1, m)
                t = build_T(QMatrix(q), ItemParams(c, g), combos) @ p
                u = build_U(QMatrix(q), ItemParams(c, g), combos) @ p
                ql = q.tolist()
                worst = max(worst, np.abs(t - [and_prob(ql, p, c, g, s, "dina") for s in subs]).max(),
                            np.abs(u - [or_prob(ql, p, c, g, s, "dino") for s in subs]).max())
                count += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 30
    report(5, ok, f"{count} instances, max error {worst:.1e}", elapsed)
    assert ok


def _noise_free_instance(seed: int):
    rng = np.random.default_rng([seed, 6])
    q = QMatrix(random_complete_q(rng, 4, 2))
    return q, AttributeDistribution(diversified_p(rng, 2))


def _identified_instance(seed: int):
    """Complete 4x2 Q, every attribute required by two items, no zero rows."""
    rng = np.random.default_rng([seed, 77])
    while True:
        q = np.vstack([np.eye(2, dtype=int), rng.integers(0, 2, (2, 2))])
        if q.any(axis=1).all() and (q.sum(axis=0) >= 2).all():
            break
    q = QMatrix(q[rng.permutation(4)])
    return q, AttributeDistribution(diversified_p(rng, 2)), rng


@cache
def _noise_free_run(model: str):
    t0 = time.perf_counter()
    ones = ItemParams.uniform(4, 1, 0)
    recovered, worst = 0, 0.0
    for s in range(100):
        q, p = _noise_free_instance(s)
        r = simulate(SimConfig(q, p, ones, 500, model, seed=s))
        res = exhaustive_search(r, 2, model, combos=default_combos(4), params=ones)
        recovered += equivalent(res.q_hat, q)
        worst = max(worst, score(q, ones, moment_vector(r, default_combos(4), model)))
    return recovered, worst, time.perf_counter() - t0


@cache
def _noisy_run(model: str, n: int):
    t0 = time.perf_counter()
    recovered, true_scores = 0, []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for s in range(SEEDS):
            q, p, _ = _identified_instance(s)
            r = simulate(SimConfig(q, p, ItemParams.uniform(4, 0.8, 0.2), n, model, seed=s))
            res = search_q(r, 2, model)
            recovered += equivalent(res.q_hat, q)
            true_scores.append(fit_item_params(q, moment_vector(r, default_combos(4), model), model)[1])
    return recovered, float(np.median(true_scores)), time.perf_counter() - t0


def test_criterion_06_noise_free_recovery():
    recovered, worst, elapsed = _noise_free_run("dina")
    ok = recovered >= 99 and worst <= 1e-8 and elapsed < 300
    report(6, ok, f"recovered {recovered}/100, max true-Q score {worst:.1e}", elapsed)
    assert ok


def _trend(model: str):
    runs = [_noisy_run(model, n) for n in NS]
    rates = [r[0] / SEEDS for r in runs]
    medians = [r[1] for r in runs]
    slope = float(np.polyfit(np.log(NS), np.log(medians), 1)[0])
    elapsed = sum(r[2] for r in runs)
    return rates, medians, slope, elapsed


def test_criterion_07_noisy_consistency_trend():
    rates, medians, slope, elapsed = _trend("dina")
    monotone = all(a <= b for a, b in zip(rates, rates[1:]))
    ok = monotone and rates[-1] >= 0.9 and -0.65 <= slope <= -0.35 and elapsed < 1800
    detail = (f"recovery {'/'.join(f'{x:.2f}' for x in rates)} at N={'/'.join(map(str, NS))}, "
              f"median true-Q score slope {slope:.2f}")
    report(7, ok, detail, elapsed)
    assert ok


def test_criterion_08_dino_mirror():
    t0 = time.perf_counter()
    pairs = [(_noise_free_run("dina")[0], _noise_free_run("dino")[0], 100)]
    pairs += [(_noisy_run("dina", n)[0], _noisy_run("dino", n)[0], SEEDS) for n in NS]
    pvals = [stats.fisher_exact([[a, total - a], [b, total - b]])[1] for a, b, total in pairs]
    elapsed = time.perf_counter() - t0
    ok = min(pvals) >= 0.01 and elapsed < 1800
    detail = "dina/dino " + ", ".join(f"{a}/{b}" for a, b, _ in pairs) + f"; min Fisher p {min(pvals):.2f}"
    report(8, ok, detail, elapsed)
    assert ok


def test_criterion_09_validation_statistic():
    t0 = time.perf_counter()
    inside = exceeded = 0
    params = ItemParams.uniform(4, 0.9, 0.1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for s in range(100):
            q, p, rng = _identified_instance(s)
            r = simulate(SimConfig(q, p, params, 4000, seed=s))
            inside += validate_q(q, r, n_reference=39, seed=s).inside_central_band
            e = q.entries.copy()
            e[rng.integers(4), rng.integers(2)] ^= 1
            exceeded += validate_q(QMatrix(e), r, n_reference=39, seed=s).exceeds_max
    elapsed = time.perf_counter() - t0
    ok = inside >= 90 and exceeded >= 95 and elapsed < 1200
    report(9, ok, f"true Q inside 95% band {inside}/100, perturbed Q above max {exceeded}/100", elapsed)
    assert ok


def test_criterion_10_strategy_agreement():
    t0 = time.perf_counter()
    ones = ItemParams.uniform(8, 1, 0)
    split_ok = anchored_ok = 0
    for s in range(20):
        rng = np.random.default_rng([s, 10])
        q = QMatrix(random_complete_q(rng, 8, 2))
        p = AttributeDistribution(diversified_p(rng, 2))
        r = simulate(SimConfig(q, p, ones, 2000, seed=s))
        full = exhaustive_search(r, 2, params=ones)
        split_ok += equivalent(split_merge(r, 2, params=ones).q_hat, full.q_hat)
        anchors = tuple(int(np.flatnonzero((q.entries == np.eye(2)[j]).all(axis=1))[0]) for j in range(2))
        anchored = anchored_search(r, 2, constraints=SearchConstraints(anchor_rows=anchors), params=ones)
        anchored_ok += equivalent(anchored.q_hat, full.q_hat)
    elapsed = time.perf_counter() - t0
    ok = split_ok == 20 and anchored_ok == 20 and elapsed < 600
    report(10, ok, f"split agrees {split_ok}/20, anchored agrees {anchored_ok}/20", elapsed)
    assert ok


def _cli(*argv) -> int:
    return cli_main([str(a) for a in argv])


def test_criterion_11_cli_contract(tmp_path, capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    problems = []
    schemas = {name: load_schema(name) for name in ("fit", "validation", "manifest")}

    def conforms(path, name):
        try:
            jsonschema.validate(json.loads(path.read_text()), schemas[name])
        except jsonschema.ValidationError as exc:
            problems.append(f"{path.name}: {exc.message}")

    for i in range(10):
        model = ("dina", "dino")[i % 2]
        k = 2 + (i % 3 == 2)
        m = int(rng.integers(k + 1, 6))
        q = QMatrix(random_complete_q(rng, m, k))
        cfg = tmp_path / f"c{i}.json"
        cfg.write_text(json.dumps({"q": q.tolist(), "n": 1500, "seed": i, "c": 1.0, "g": 0.0,
                                   "p": diversified_p(rng, k).tolist(), "model": model}))
        runs = {}
        for tag, threads in (("a", 1), ("b", 1), ("c", 4)):
            out = tmp_path / f"{i}{tag}"
            codes = (_cli("simulate", cfg, "--out-dir", out, "--threads", threads),
                     _cli("estimate", out / "responses.csv", "-k", k, "--model", model, "--fix-params", "1,0",
                          "--threads", threads, "--out-dir", out))
            if codes != (0, 0):
                problems.append(f"config {i}: exit codes {codes}")
            runs[tag] = ((out / "responses.csv").read_bytes(), (out / "fit.json").read_bytes())
        if not runs["a"] == runs["b"] == runs["c"]:
            problems.append(f"config {i}: outputs differ across runs or thread counts")
        out = tmp_path / f"{i}a"
        fit = json.loads((out / "fit.json").read_text())
        if not equivalent(QMatrix.from_rows(fit["q_hat"]), q):
            problems.append(f"config {i}: round trip did not recover Q")
        conforms(out / "fit.json", "fit")
        conforms(out / "manifest.json", "manifest")
        if i == 0:
            write_q(tmp_path / "q0.csv", q)
            vdir = tmp_path / "v0"
            if _cli("validate", out / "responses.csv", tmp_path / "q0.csv", "--n-reference", 9,
                    "--out-dir", vdir) != 0:
                problems.append("validate failed")
            conforms(vdir / "validation.json", "validation")
            conforms(vdir / "manifest.json", "manifest")

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"q": [[1, 0], [0, 1]], "n": 0, "seed": 1, "c": 0.9, "g": 0.1}))
    wide = tmp_path / "wide.csv"
    np.savetxt(wide, rng.integers(0, 2, (20, 30)), fmt="%d", delimiter=",")
    badq = tmp_path / "badq.csv"
    badq.write_text("1,0\n0,7\n")
    expected = {
        "config error": (_cli("simulate", bad, "--out-dir", tmp_path / "x"), 2),
        "budget": (_cli("estimate", wide, "-k", 2, "--out-dir", tmp_path / "x"), 3),
        "malformed Q": (_cli("validate", tmp_path / "0a" / "responses.csv", badq), 2),
    }
    for name, (got, want) in expected.items():
        if got != want:
            problems.append(f"{name}: exit {got}, expected {want}")
    capsys.readouterr()
    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed < 300
    report(11, ok, "10 configs round trip, exit codes 2/3, schemas, byte-identical across runs and threads"
           if ok else "; ".join(problems), elapsed)
    assert ok, problems

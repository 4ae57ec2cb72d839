"""Command-line interface: ``qmx simulate | estimate | validate | calibrate``.

Exit codes: 0 success, 2 configuration or input error, 3 search budget
exceeded, 4 result written but flagged as not converged.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    BIT_CONVENTION,
    AttributeDistribution,
    ItemParams,
    Model,
    QMatrix,
    missing_unit_rows,
    unit_row_items,
)
from .errors import BudgetExceededError, ConfigError, QmxError
from .estimation import SearchConstraints, search_q, validate_q
from .estimation.search import DEFAULT_BUDGET
from .io import (
    key_line,
    load_config,
    read_q,
    read_responses,
    sha256,
    write_json,
    write_profiles,
    write_responses,
)
from .simulate import RNG_NAME, SimConfig, simulate
from .tmatrix import build_moment_matrix, default_combos, dump_csv

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_NONCONVERGED = 0, 2, 3, 4
MANIFEST_SCHEMA = "qmx.manifest/1"


class _Parser(argparse.ArgumentParser):
    json_errors = False

    def error(self, message):
        if _Parser.json_errors:
            sys.stderr.write(json.dumps({"error": "usage", "message": message}) + "\n")
            sys.exit(EXIT_CONFIG)
        super().error(message)


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _pair(text: str) -> tuple:
    try:
        c, g = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected c,g, got {text!r}") from None
    return c, g


def _threads_default() -> int:
    try:
        return max(1, int(os.environ.get("QMX_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qmx", description="Moment-matching Q-matrix estimation for DINA/DINO models.")
    ap.add_argument("--version", action="version", version=f"qmx {__version__}")
    ap.add_argument("--json-errors", action="store_true", help="print errors as JSON objects on stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model=True):
        if model:
            p.add_argument("--model", choices=[m.value for m in Model], default="dina")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=_threads_default(),
                       help="worker threads (default: $QMX_THREADS or 1)")
        p.add_argument("--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("simulate", help="simulate responses from a JSON/TOML config")
    p.add_argument("config", type=Path)
    p.add_argument("--latent", action="store_true", help="also write profiles.csv (or set latent = true)")
    p.add_argument("--threads", type=int, default=_threads_default())
    p.add_argument("--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("estimate", help="estimate Q, (c, g) and p from responses")
    p.add_argument("responses", type=Path)
    p.add_argument("-k", type=int, help="number of attributes (taken from --known-q if omitted)")
    p.add_argument("--strategy", choices=["exhaustive", "anchored", "split"], default="exhaustive")
    p.add_argument("--max-order", type=int, help="largest item combination used in the moments")
    p.add_argument("--known-q", type=Path, help="Q CSV with 0/1 known entries and -1 unknown")
    p.add_argument("--fix-params", type=_pair, metavar="C,G", help="score candidates at known c,g")
    p.add_argument("--anchor-rows", type=_int_list, help="items carrying unit rows e_1..e_k")
    p.add_argument("--group-size", type=int, default=6)
    p.add_argument("--overlap", type=int)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--dump-matrix", type=Path, help="write the T/U matrix of the estimate as CSV")
    common(p)

    p = sub.add_parser("validate", help="check a Q-matrix against responses")
    p.add_argument("responses", type=Path)
    p.add_argument("q", type=Path)
    p.add_argument("--n-reference", type=int, default=99)
    p.add_argument("--max-order", type=int)
    common(p)

    p = sub.add_parser("calibrate", help="calibrate new items against anchor items")
    p.add_argument("responses", type=Path)
    p.add_argument("anchor_q", type=Path, help="Q rows of the existing items, in response-column order")
    p.add_argument("--new-items", type=_int_list, default=[], help="0-based response columns of new items")
    p.add_argument("--fix-params", type=_pair, metavar="C,G")
    common(p)
    return ap


def _manifest(command: str, config: dict, inputs: list, seed, summary: dict, outputs: list, started: float,
              threads: int) -> dict:
    return {
        "schema_version": MANIFEST_SCHEMA,
        "command": command,
        "config": config,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(p): sha256(p) for p in outputs},
        "seed": seed,
        "version": __version__,
        "threads": threads,
        "wall_clock_seconds": round(time.time() - started, 6),
        "summary": summary,
    }


def _finish(args, command, config, inputs, seed, summary, outputs, started):
    path = args.out_dir / "manifest.json"
    write_json(path, _manifest(command, config, inputs, seed, summary, outputs, started, args.threads))
    return path


def _fixed(args, m: int):
    if args.fix_params is None:
        return None
    c, g = args.fix_params
    return ItemParams.uniform(m, c, g)


def _vector(cfg, text, key, m):
    val = cfg.get(key)
    if val is None:
        raise ConfigError(f"missing key {key!r}", line=key_line(text, key), key=key)
    arr = np.full(m, float(val)) if np.isscalar(val) else np.asarray(val, dtype=float)
    if arr.shape != (m,):
        raise ConfigError(f"{key} must be a number or a list of {m} numbers", line=key_line(text, key), key=key)
    return arr


def _sim_config(cfg: dict, text: str) -> SimConfig:
    def fail(key, msg):
        raise ConfigError(msg, line=key_line(text, key), key=key)

    if "q" not in cfg:
        fail("q", "missing key 'q'")
    try:
        q = QMatrix.from_rows(cfg["q"])
    except (ValueError, TypeError) as exc:
        fail("q", f"invalid q: {exc}")
    if "n" not in cfg:
        fail("n", "missing key 'n'")
    n = cfg["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        fail("n", "n must be ≥ 1")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        fail("seed", "seed must be an unsigned 64-bit integer")
    try:
        params = ItemParams(_vector(cfg, text, "c", q.m), _vector(cfg, text, "g", q.m))
    except ConfigError:
        raise
    except ValueError as exc:
        fail("c", str(exc))
    p = cfg.get("p", "uniform")
    try:
        dist = AttributeDistribution.uniform(q.k) if p == "uniform" else AttributeDistribution(np.asarray(p, float))
        model = Model.parse(cfg.get("model", "dina"))
    except ValueError as exc:
        fail("p" if "model" not in str(exc) else "model", str(exc))
    try:
        return SimConfig(q, dist, params, n, model, seed)
    except ConfigError as exc:
        raise ConfigError(exc.message, line=key_line(text, exc.key) if exc.key else None, key=exc.key) from None
    except ValueError as exc:
        fail("q", str(exc))


def cmd_simulate(args) -> int:
    started = time.time()
    cfg, text = load_config(args.config)
    try:
        sim = _sim_config(cfg, text)
    except ConfigError as exc:
        where = f"{args.config}:{exc.line}" if exc.line else str(args.config)
        raise ConfigError(f"{where}: {exc.message}", line=exc.line, key=exc.key) from None
    r = simulate(sim, threads=args.threads)
    out = args.out_dir
    outputs = [out / "responses.csv"]
    write_responses(outputs[0], r)
    if args.latent or cfg.get("latent", False):
        outputs.append(out / "profiles.csv")
        write_profiles(outputs[1], r.latent, sim.q.k)
    summary = {"n": r.n, "m": r.m, "k": sim.q.k, "model": sim.model.value, "rng": RNG_NAME,
               "profile_index": BIT_CONVENTION}
    config = {**cfg, "rng": RNG_NAME}
    _finish(args, "simulate", config, [args.config], sim.seed, summary, outputs, started)
    print(f"# {BIT_CONVENTION}")
    print(f"simulated {r.n} subjects x {r.m} items ({sim.model.value}, k={sim.q.k}, seed={sim.seed})")
    for p in outputs:
        print(f"wrote {p}")
    return EXIT_OK


def _print_fit(res, path):
    print(f"# {BIT_CONVENTION}")
    print(f"model {res.model.value}  strategy {res.diagnostics.get('strategy')}  score {res.score:.6g}"
          f"  converged {res.converged}")
    print("q_hat:")
    for i, row in enumerate(res.q_hat.tolist()):
        print(f"  item {i}: {' '.join(map(str, row))}   c={res.params_hat.c[i]:.4f} g={res.params_hat.g[i]:.4f}")
    print("p_hat: " + " ".join(f"{x:.4f}" for x in res.p_hat.p))
    if res.near_ties:
        print(f"near ties: {len(res.near_ties)}")
    for note in res.diagnostics.get("warnings", []):
        print(f"warning: {note}")
    print(f"wrote {path}")


def cmd_estimate(args) -> int:
    started = time.time()
    r = read_responses(args.responses)
    inputs = [args.responses]
    known = None
    if args.known_q is not None:
        known = read_q(args.known_q)
        inputs.append(args.known_q)
        if known.m != r.m:
            raise ConfigError(f"--known-q has {known.m} rows, responses have {r.m} items", key="known_q")
        if args.k is not None and args.k != known.k:
            raise ConfigError(f"-k {args.k} disagrees with --known-q width {known.k}", key="k")
    k = args.k if args.k is not None else (known.k if known is not None else None)
    if k is None or k < 1:
        raise ConfigError("give -k or --known-q", key="k")
    if args.max_order is not None and not 1 <= args.max_order <= r.m:
        raise ConfigError(f"--max-order must lie in [1, {r.m}]", key="max_order")
    combos = default_combos(r.m, args.max_order)
    params = _fixed(args, r.m)
    constraints = SearchConstraints(known=known, anchor_rows=tuple(args.anchor_rows) if args.anchor_rows else None)
    options = {}
    if args.strategy == "split":
        if known is not None:
            raise ConfigError("--known-q is not supported with --strategy split", key="strategy")
        options = {"group_size": args.group_size, "overlap": args.overlap, "max_order": args.max_order}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = search_q(r, k, args.model, constraints, combos, args.strategy, params, args.seed, args.threads,
                       args.budget, **options)
    config = {
        "command": "estimate", "responses_sha256": sha256(args.responses), "k": k, "model": args.model,
        "strategy": args.strategy, "max_order": combos.max_order, "fix_params": args.fix_params,
        "known_q": known.signed().tolist() if known is not None else None, "anchor_rows": args.anchor_rows,
        "group_size": args.group_size if args.strategy == "split" else None,
        "overlap": args.overlap if args.strategy == "split" else None,
        "budget": args.budget, "seed": args.seed,
    }
    out = args.out_dir / "fit.json"
    write_json(out, res.to_dict(config))
    outputs = [out]
    if args.dump_matrix is not None:
        dump_csv(build_moment_matrix(res.q_hat, res.params_hat, combos, res.model), args.dump_matrix)
        outputs.append(args.dump_matrix)
    summary = {"score": res.score, "converged": res.converged, "q_hat": res.q_hat.tolist(),
               "near_ties": len(res.near_ties)}
    _finish(args, "estimate", config, inputs, args.seed, summary, outputs, started)
    _print_fit(res, out)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_validate(args) -> int:
    started = time.time()
    r = read_responses(args.responses)
    q = read_q(args.q)
    if q.m != r.m:
        raise ConfigError(f"Q has {q.m} rows, responses have {r.m} items", key="q")
    if not q.fully_known:
        raise ConfigError("validation needs a Q without unknown (-1) entries", key="q")
    if args.n_reference < 1:
        raise ConfigError("--n-reference must be ≥ 1", key="n_reference")
    combos = default_combos(r.m, args.max_order)
    rep = validate_q(q, r, args.model, combos, args.n_reference, args.seed)
    doc = rep.to_dict()
    doc["conventions"] = {"profile_index": BIT_CONVENTION}
    doc["config"] = {"responses_sha256": sha256(args.responses), "q": q.tolist(), "model": args.model,
                     "n_reference": args.n_reference, "max_order": combos.max_order, "seed": args.seed}
    out = args.out_dir / "validation.json"
    write_json(out, doc)
    summary = {k: doc[k] for k in ("s_obs", "exceedance", "inside_central_band", "exceeds_max", "low_power")}
    _finish(args, "validate", doc["config"], [args.responses, args.q], args.seed, summary, [out], started)
    print(f"# {BIT_CONVENTION}")
    ref = doc["reference"]
    print(f"s_obs {rep.s_obs:.6g}  reference median {ref['q50']:.6g}  95% band [{ref['q025']:.6g}, "
          f"{ref['q975']:.6g}]  max {ref['max']:.6g}")
    print(f"exceedance {rep.exceedance:.3f}  inside band {rep.inside_central_band}  above max {rep.exceeds_max}")
    if rep.low_power:
        print(f"warning: N={rep.sample_size} is small; the reference distribution is wide and power is low")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    started = time.time()
    r = read_responses(args.responses)
    anchor = read_q(args.anchor_q)
    new = sorted(set(args.new_items))
    if any(not 0 <= i < r.m for i in new):
        raise ConfigError(f"--new-items must be response columns in [0, {r.m - 1}]", key="new_items")
    old = [i for i in range(r.m) if i not in new]
    if anchor.m != len(old):
        raise ConfigError(f"anchor Q has {anchor.m} rows, expected {len(old)} (responses minus new items)",
                          key="anchor_q")
    missing = missing_unit_rows(anchor)
    if missing:
        raise ConfigError("anchor Q is not complete; missing unit rows for attributes "
                          + ", ".join(str(j + 1) for j in missing), key="anchor_q")
    k = anchor.k
    signed = -np.ones((r.m, k), dtype=np.int8)
    signed[old] = anchor.signed()
    anchors = tuple(old[i] for i in unit_row_items(anchor))
    constraints = SearchConstraints(known=QMatrix.from_signed(signed), anchor_rows=anchors)
    params = _fixed(args, r.m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = search_q(r, k, args.model, constraints, None, "anchored", params, args.seed, args.threads)
    config = {"command": "calibrate", "responses_sha256": sha256(args.responses), "anchor_q": anchor.signed().tolist(),
              "new_items": new, "model": args.model, "fix_params": args.fix_params, "seed": args.seed}
    out = args.out_dir / "fit.json"
    write_json(out, res.to_dict(config))
    summary = {"score": res.score, "converged": res.converged, "q_hat": res.q_hat.tolist()}
    _finish(args, "calibrate", config, [args.responses, args.anchor_q], args.seed, summary, [out], started)
    _print_fit(res, out)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "validate": cmd_validate,
            "calibrate": cmd_calibrate}


def _report(args, kind: str, exc: Exception, payload: dict | None = None):
    if args.json_errors:
        doc = payload or {"error": kind, "message": str(exc)}
        sys.stderr.write(json.dumps(doc) + "\n")
    else:
        sys.stderr.write(f"qmx: error: {exc}\n")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _Parser.json_errors = "--json-errors" in argv
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        args.threads = 1
    try:
        return COMMANDS[args.command](args)
    except BudgetExceededError as exc:
        _report(args, "budget", exc, {"error": "budget", "message": str(exc), "free_entries": exc.n_free,
                                      "budget": exc.budget, "alternatives": list(exc.alternatives)})
        return EXIT_BUDGET
    except ConfigError as exc:
        _report(args, "config", exc, exc.to_dict())
        return EXIT_CONFIG
    except QmxError as exc:
        _report(args, "input", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

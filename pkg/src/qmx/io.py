"""CSV, JSON and TOML reading and writing for the command-line tools.

Q files hold one item per line with entries 0, 1 or -1 (unknown).
Response files hold one subject per line with 0/1 entries and an optional
header line.  Every writer goes through a temporary file and ``os.replace``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
import sys
import tempfile
from pathlib import Path

import numpy as np

from .core import QMatrix, ResponseMatrix
from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def atomic_write(path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    atomic_write(path, dumps_json(obj))


def _rows(path, label: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {label} file {path}: {exc.strerror}") from None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells) or cells[0].startswith("#"):
            continue
        yield lineno, cells


def _parse_int_row(cells, lineno, allowed, label, path):
    out = []
    for col, cell in enumerate(cells, start=1):
        try:
            v = int(cell)
        except ValueError:
            v = None
        if v not in allowed:
            raise ConfigError(f"{path}:{lineno}: {label} entry {cell!r} in column {col} is not one of "
                              f"{sorted(allowed)}", line=lineno)
        out.append(v)
    return out


def read_q(path) -> QMatrix:
    rows, width = [], None
    for lineno, cells in _rows(path, "Q"):
        row = _parse_int_row(cells, lineno, {-1, 0, 1}, "Q", path)
        if width is not None and len(row) != width:
            raise ConfigError(f"{path}:{lineno}: expected {width} columns, found {len(row)}", line=lineno)
        width = len(row)
        rows.append(row)
    if not rows:
        raise ConfigError(f"{path}: Q file is empty")
    return QMatrix.from_signed(np.array(rows, dtype=np.int8))


def write_q(path, q: QMatrix) -> None:
    atomic_write(path, "".join(",".join(str(int(x)) for x in row) + "\n" for row in q.signed()))


def read_responses(path) -> ResponseMatrix:
    rows, width = [], None
    for lineno, cells in _rows(path, "response"):
        if not rows and width is None and not all(re.fullmatch(r"-?\d+", c) for c in cells):
            width = len(cells)  # header line
            continue
        row = _parse_int_row(cells, lineno, {0, 1}, "response", path)
        if width is not None and len(row) != width:
            raise ConfigError(f"{path}:{lineno}: expected {width} columns, found {len(row)}", line=lineno)
        width = len(row)
        rows.append(row)
    if not rows:
        raise ConfigError(f"{path}: no responses found")
    return ResponseMatrix(np.array(rows, dtype=np.int8))


def write_responses(path, r: ResponseMatrix, header: bool = True) -> None:
    buf = io.StringIO()
    if header:
        buf.write(",".join(f"item{i}" for i in range(r.m)) + "\n")
    np.savetxt(buf, r.data, fmt="%d", delimiter=",")
    atomic_write(path, buf.getvalue())


def write_profiles(path, latent: np.ndarray, k: int) -> None:
    buf = io.StringIO()
    buf.write("index," + ",".join(f"a{j + 1}" for j in range(k)) + "\n")
    bits = (np.asarray(latent)[:, None] >> np.arange(k)) & 1
    np.savetxt(buf, np.column_stack([latent, bits]), fmt="%d", delimiter=",")
    atomic_write(path, buf.getvalue())


def key_line(text: str, key: str) -> int | None:
    """First line on which ``key`` is assigned in a JSON or TOML document."""
    pat = re.compile(rf'^\s*(?:"{re.escape(key)}"\s*:|{re.escape(key)}\s*=)|"{re.escape(key)}"\s*:')
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pat.search(line):
            return lineno
    return None


def load_config(path) -> tuple:
    """``(config dict, source text)`` from a ``.json`` or ``.toml`` file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if path.suffix.lower() == ".toml":
        try:
            cfg = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"{path}: {exc}", line=int(m.group(1)) if m else None) from None
    else:
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}", line=exc.lineno) from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a table/object", line=1)
    return cfg, text


def load_schema(name: str) -> dict:
    """Shipped JSON schema ``fit``, ``validation`` or ``manifest``."""
    from importlib.resources import files

    return json.loads(files("qmx").joinpath("schema", f"{name}.schema.json").read_text(encoding="utf-8"))

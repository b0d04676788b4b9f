"""Text QUBO files (qbsolv-style) with a JSON sidecar naming the variables.

    c offset <value>
    p qubo 0 <num_variables> <n_linear> <n_quadratic>
    i i <value>        one per variable, zero allowed
    i j <value>        i < j

The sidecar ``<stem>.vars.json`` lists the variable keys by index.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path
from typing import TextIO

from .bqf import BinaryQuadraticForm, Index, key_from_json, key_to_json


class QuboFormatError(ValueError):
    pass


def write_qubo(q: BinaryQuadraticForm, sink: TextIO) -> None:
    n = q.num_variables
    sink.write(f"c offset {q.offset!r}\n")
    sink.write(f"p qubo 0 {n} {n} {len(q.quadratic)}\n")
    for i in range(n):
        sink.write(f"{i} {i} {q.linear.get(i, 0.0)!r}\n")
    for (i, j), v in q.quadratic.items():
        sink.write(f"{i} {j} {v!r}\n")


def read_qubo(source: TextIO, keys=None) -> BinaryQuadraticForm:
    header = None
    offset = 0.0
    linear: dict[int, float] = {}
    quadratic: dict[tuple[int, int], float] = {}
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "c":
            if len(parts) == 3 and parts[1] == "offset":
                offset = _float(parts[2], lineno)
            continue
        if parts[0] == "p":
            if len(parts) != 6 or parts[1] != "qubo":
                raise QuboFormatError(f"line {lineno}: malformed header {line!r}")
            header = tuple(_int(p, lineno) for p in parts[3:])
            continue
        if header is None:
            raise QuboFormatError(f"line {lineno}: entry before 'p qubo' header")
        if len(parts) != 3:
            raise QuboFormatError(f"line {lineno}: expected 'i j value'")
        i, j, v = _int(parts[0], lineno), _int(parts[1], lineno), _float(parts[2], lineno)
        n = header[0]
        if not (0 <= i < n and 0 <= j < n):
            raise QuboFormatError(f"line {lineno}: index out of range for {n} variables")
        if i == j:
            if i in linear:
                raise QuboFormatError(f"line {lineno}: node {i} declared twice")
            linear[i] = v
        else:
            if i > j:
                raise QuboFormatError(f"line {lineno}: couplers must have i < j")
            if (i, j) in quadratic:
                raise QuboFormatError(f"line {lineno}: coupler ({i}, {j}) repeated")
            quadratic[(i, j)] = v
    if header is None:
        raise QuboFormatError("missing 'p qubo' header")
    n, n_lin, n_quad = header
    if len(linear) != n_lin or len(quadratic) != n_quad:
        raise QuboFormatError(
            f"header announces {n_lin} nodes/{n_quad} couplers, found {len(linear)}/{len(quadratic)}"
        )
    for i, j in quadratic:
        if i not in linear or j not in linear:
            raise QuboFormatError(f"coupler ({i}, {j}) references an undeclared node")
    if keys is None:
        keys = [Index(i) for i in range(n)]
    if len(keys) != n:
        raise QuboFormatError(f"sidecar names {len(keys)} variables, file has {n}")
    return BinaryQuadraticForm(keys, linear, quadratic, offset)


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".vars.json")


def atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_qubo(q: BinaryQuadraticForm, path: str | Path) -> None:
    path = Path(path)
    buf = io.StringIO()
    write_qubo(q, buf)
    atomic_write(path, buf.getvalue())
    side = {"variables": [key_to_json(k) for k in q.keys]}
    atomic_write(sidecar_path(path), json.dumps(side, indent=1, sort_keys=True) + "\n")


def import_qubo(path: str | Path) -> BinaryQuadraticForm:
    path = Path(path)
    keys = None
    side = sidecar_path(path)
    if side.exists():
        try:
            keys = [key_from_json(k) for k in json.loads(side.read_text(encoding="utf-8"))["variables"]]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise QuboFormatError(f"bad sidecar {side}: {exc}") from exc
    with open(path, encoding="utf-8") as fh:
        return read_qubo(fh, keys)


def _int(s: str, lineno: int) -> int:
    try:
        return int(s)
    except ValueError:
        raise QuboFormatError(f"line {lineno}: expected integer, got {s!r}") from None


def _float(s: str, lineno: int) -> float:
    try:
        return float(s)
    except ValueError:
        raise QuboFormatError(f"line {lineno}: expected number, got {s!r}") from None

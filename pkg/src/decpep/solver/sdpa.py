"""SDPA sparse format (``.dat-s``) export/import and CSDP-style solution files.

The file encodes ``max tr(F0 Y)  s.t.  tr(Fi Y) = c_i,  Y PSD`` with a block
diagonal ``Y``.  Free scalars become ``f = f+ - f-`` in a diagonal block and
each ``<=`` row gets its own slack in a second diagonal block.  A comment line
carries the metadata needed to rebuild the original :class:`SdpData`
(block names, free/slack counts, objective offset).
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from decpep.solver.data import Functional, Row, SdpData, Solution

_TAG = "decpep"


def _fmt(v: float) -> str:
    return "%.17g" % v


def _sdpa_entries(fn: Functional, n_blocks: int, n_free: int, free_blk: int):
    """Upper-triangle SDPA entries (block, i, j, value), 1-based."""
    out = []
    for b, i, j, c in fn.entries:
        out.append((b + 1, i + 1, j + 1, c if i == j else c / 2.0))
    for k, c in fn.free:
        out.append((free_blk, k + 1, k + 1, c))
        out.append((free_blk, n_free + k + 1, n_free + k + 1, -c))
    return out


def export_sdpa(data: SdpData, path=None) -> str:
    """Write ``data`` as SDPA sparse text; returns the text (and writes ``path`` if given).

    Entries are ordered by constraint, then block, then (i, j); numbers use
    17 significant digits so the round trip is exact.
    """
    nb = len(data.blocks)
    ineq = [r for r, row in enumerate(data.rows) if row.relation == "<="]
    sizes = [str(n) for _, n in data.blocks]
    free_blk = slack_blk = 0
    if data.n_free:
        free_blk = nb + 1
        sizes.append(str(-2 * data.n_free))
    if ineq:
        slack_blk = nb + 1 + (1 if data.n_free else 0)
        sizes.append(str(-len(ineq)))
    meta = {
        "blocks": [name for name, _ in data.blocks],
        "n_free": data.n_free,
        "n_slack": len(ineq),
        "offset": data.objective_offset,
    }
    lines = [f'"{_TAG} {json.dumps(meta, sort_keys=True)}']
    lines.append(str(data.n_rows))
    lines.append(str(len(sizes)))
    lines.append(" ".join(sizes))
    lines.append(" ".join(_fmt(r.rhs) for r in data.rows) if data.rows else "")

    def emit(matno, entries):
        for b, i, j, v in sorted(entries):
            if v != 0.0:
                lines.append(f"{matno} {b} {i} {j} {_fmt(v)}")

    emit(0, _sdpa_entries(data.objective, nb, data.n_free, free_blk))
    slack_of = {r: s for s, r in enumerate(ineq)}
    for r, row in enumerate(data.rows):
        ents = _sdpa_entries(row.functional, nb, data.n_free, free_blk)
        if r in slack_of:
            ents.append((slack_blk, slack_of[r] + 1, slack_of[r] + 1, 1.0))
        emit(r + 1, ents)
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _numbers(line: str) -> list[str]:
    return [t for t in re.split(r"[\s,{}()]+", line.strip()) if t]


def _parse(text: str):
    meta = None
    body = []
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s[0] in "\"*":
            m = re.match(r'["*]\s*' + _TAG + r"\s+(\{.*\})\s*$", s)
            if m and meta is None:
                meta = json.loads(m.group(1))
            continue
        body.append(s)
    if len(body) < 3:
        raise ValueError("truncated SDPA file")
    m = int(_numbers(body[0])[0])
    nblocks = int(_numbers(body[1])[0])
    sizes = [int(float(t)) for t in _numbers(body[2])]
    if len(sizes) != nblocks:
        raise ValueError("block structure does not match block count")
    rest = body[3:]
    cvals: list[float] = []
    k = 0
    while len(cvals) < m:
        if k >= len(rest):
            raise ValueError("missing right-hand side values")
        cvals.extend(float(t) for t in _numbers(rest[k]))
        k += 1
    if len(cvals) != m:
        raise ValueError("wrong number of right-hand side values")
    entries = []
    for line in rest[k:]:
        t = _numbers(line)
        if len(t) != 5:
            raise ValueError(f"bad entry line: {line!r}")
        entries.append((int(t[0]), int(t[1]), int(t[2]), int(t[3]), float(t[4])))
    return meta, m, sizes, cvals, entries


def import_sdpa(source) -> SdpData:
    """Parse SDPA sparse text (a path or the text itself).

    Files written by :func:`export_sdpa` are rebuilt exactly; other files map
    each full block to a PSD block and each diagonal block to 1x1 blocks.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = source
    meta, m, sizes, cvals, entries = _parse(text)
    per = [[] for _ in range(m + 1)]
    for matno, b, i, j, v in entries:
        if not 0 <= matno <= m or not 1 <= b <= len(sizes):
            raise ValueError(f"entry ({matno}, {b}, {i}, {j}) out of range")
        if i > j:
            i, j = j, i
        per[matno].append((b, i, j, v))

    if meta is not None:
        return _import_native(meta, m, sizes, cvals, per)
    return _import_foreign(m, sizes, cvals, per)


def _import_native(meta, m, sizes, cvals, per) -> SdpData:
    names = meta["blocks"]
    nb = len(names)
    n_free = int(meta["n_free"])
    free_blk = nb + 1 if n_free else -1
    slack_blk = nb + 1 + (1 if n_free else 0) if meta["n_slack"] else -1

    def functional(ents):
        e, f = {}, {}
        has_slack = False
        for b, i, j, v in ents:
            if b == free_blk:
                if i <= n_free:
                    f[i - 1] = f.get(i - 1, 0.0) + v
            elif b == slack_blk:
                has_slack = True
            else:
                e[(b - 1, i - 1, j - 1)] = v if i == j else 2.0 * v
        return Functional(tuple((b, i, j, c) for (b, i, j), c in sorted(e.items())),
                          tuple(sorted(f.items()))), has_slack

    obj, _ = functional(per[0])
    rows = []
    for r in range(1, m + 1):
        fn, slack = functional(per[r])
        rows.append(Row(fn, "<=" if slack else "==", cvals[r - 1]))
    blocks = tuple((names[b], sizes[b]) for b in range(nb))
    return SdpData(blocks, n_free, obj, tuple(rows), float(meta["offset"]))


def _import_foreign(m, sizes, cvals, per) -> SdpData:
    blocks, where = [], {}
    for b, n in enumerate(sizes, start=1):
        if n > 0:
            where[(b, None)] = len(blocks)
            blocks.append((f"block{b}", n))
        else:
            for i in range(1, -n + 1):
                where[(b, i)] = len(blocks)
                blocks.append((f"block{b}[{i}]", 1))

    def functional(ents):
        e = {}
        for b, i, j, v in ents:
            if sizes[b - 1] > 0:
                key = (where[(b, None)], i - 1, j - 1)
                e[key] = e.get(key, 0.0) + (v if i == j else 2.0 * v)
            elif i == j:
                key = (where[(b, i)], 0, 0)
                e[key] = e.get(key, 0.0) + v
        return Functional(tuple((b, i, j, c) for (b, i, j), c in sorted(e.items())))

    rows = tuple(Row(functional(per[r]), "==", cvals[r - 1]) for r in range(1, m + 1))
    return SdpData(tuple(blocks), 0, functional(per[0]), rows)


# ---------------------------------------------------------------------------
# CSDP-style solution files: first line y, then "matno block i j value"
# with matno 1 = dual slack Z and matno 2 = primal Y.


def sdpa_primal_blocks(data: SdpData, blocks, free) -> list[np.ndarray]:
    """The SDPA-side ``Y`` blocks (free split, slacks filled) for a solution of ``data``."""
    out = [np.asarray(B, dtype=float) for B in blocks]
    if data.n_free:
        f = np.asarray(free, dtype=float)
        out.append(np.diag(np.concatenate([np.maximum(f, 0.0), np.maximum(-f, 0.0)])))
    ineq = [row for row in data.rows if row.relation == "<="]
    if ineq:
        s = [row.rhs - row.functional.evaluate(blocks, free) for row in ineq]
        out.append(np.diag(s))
    return out


def write_solution(path, y, Y_blocks, Z_blocks=None) -> None:
    lines = [" ".join(_fmt(v) for v in y)]
    for matno, mats in ((1, Z_blocks), (2, Y_blocks)):
        if mats is None:
            continue
        for b, M in enumerate(mats, start=1):
            n = M.shape[0]
            for i in range(n):
                for j in range(i, n):
                    if M[i, j] != 0.0:
                        lines.append(f"{matno} {b} {i + 1} {j + 1} {_fmt(M[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_solution(path, data: SdpData) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
    """Parse a CSDP-style solution written for ``export_sdpa(data)``.

    Returns ``(y, blocks, free)`` in terms of ``data``.
    """
    text = Path(path).read_text().split("\n")
    body = [ln for ln in text if ln.strip() and ln.strip()[0] not in "\"*"]
    if not body:
        raise ValueError("empty solution file")
    y = np.array([float(t) for t in _numbers(body[0])])
    if len(y) != data.n_rows:
        raise ValueError(f"solution has {len(y)} multipliers, expected {data.n_rows}")
    nb = len(data.blocks)
    blocks = [np.zeros((n, n)) for _, n in data.blocks]
    fp = np.zeros(2 * data.n_free)
    for ln in body[1:]:
        t = _numbers(ln)
        if len(t) != 5 or int(t[0]) != 2:
            continue
        b, i, j, v = int(t[1]), int(t[2]) - 1, int(t[3]) - 1, float(t[4])
        if b <= nb:
            blocks[b - 1][i, j] = blocks[b - 1][j, i] = v
        elif data.n_free and b == nb + 1 and i == j:
            fp[i] = v
    free = fp[: data.n_free] - fp[data.n_free:]
    return y, blocks, free


def solution_from_file(path, data: SdpData, status: str, solve_time: float, solver: str,
                       message: str = "") -> Solution:
    y, blocks, free = read_solution(path, data)
    obj = data.objective_value(blocks, free) if status == "optimal" or status == "numerical-limit" else (
        np.inf if status == "unbounded" else -np.inf)
    rhs = np.array([r.rhs for r in data.rows])
    return Solution(status, obj, tuple(blocks), free, y, solve_time,
                    float(rhs @ y) + data.objective_offset, solver, message)

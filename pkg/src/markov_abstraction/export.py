"""CSV and explicit-transition (``.tra`` / ``.lab``) writers for chains and results."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def header_lines(meta: dict) -> list[str]:
    """``# key: value`` lines; dict values are JSON encoded."""
    out = []
    for key, val in meta.items():
        if isinstance(val, (dict, list, tuple)):
            val = json.dumps(val, sort_keys=True, default=float)
        elif isinstance(val, bool):
            val = str(val).lower()
        out.append(f"# {key}: {val}")
    return out


def read_header(path) -> dict:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].strip().partition(": ")
            try:
                meta[key] = json.loads(val)
            except json.JSONDecodeError:
                meta[key] = val
    return meta


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns: list[str], rows, meta: dict | None = None) -> Path:
    path = Path(path)
    lines = header_lines(meta or {})
    lines.append(",".join(columns))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_matrix_csv(path, matrix: np.ndarray, meta: dict | None = None) -> Path:
    """Dense matrix, one row per line, shortest round-trip float repr."""
    path = Path(path)
    lines = header_lines(meta or {})
    lines.extend(",".join(repr(float(v)) for v in row) for row in np.asarray(matrix))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)


def transitions(matrix: np.ndarray, threshold: float = 0.0) -> list[tuple[int, int, float]]:
    """Nonzero entries ``>= threshold`` as 1-based ``(i, j, p)`` in row-major order."""
    P = np.asarray(matrix)
    keep = (P > 0) & (P >= threshold)
    rows, cols = np.nonzero(keep)
    return [(int(i) + 1, int(j) + 1, float(P[i, j])) for i, j in zip(rows, cols)]


def export_chain(matrix: np.ndarray, stem, fmt: str = "tra", threshold: float = 0.0,
                 meta: dict | None = None) -> list[Path]:
    """Write a chain whose last state is the absorbing sink.

    ``tra``: ``stem.tra`` with a ``STATES n`` / ``TRANSITIONS m`` header and
    ``i j p`` lines (1-based), plus ``stem.lab`` labelling the sink.
    ``csv``: the full dense matrix in ``stem.csv``.
    """
    stem = Path(stem)
    P = np.asarray(matrix, dtype=float)
    if fmt == "csv":
        return [write_matrix_csv(stem.with_suffix(".csv"), P, meta)]
    if fmt != "tra":
        raise ValueError(f"unknown export format {fmt!r}")
    trans = transitions(P, threshold)
    nstates = P.shape[0]
    tra = [f"STATES {nstates}", f"TRANSITIONS {len(trans)}"]
    tra.extend(f"{i} {j} {p!r}" for i, j, p in trans)
    tra_path = stem.with_suffix(".tra")
    tra_path.write_text("\n".join(tra) + "\n")
    lab_path = stem.with_suffix(".lab")
    lab_path.write_text("#DECLARATION\nsink\n#END\n" + f"{nstates} sink\n")
    return [tra_path, lab_path]


def read_tra(path) -> np.ndarray:
    lines = Path(path).read_text().split("\n")
    n = int(lines[0].split()[1])
    P = np.zeros((n, n))
    for line in lines[2:]:
        if line.strip():
            i, j, p = line.split()
            P[int(i) - 1, int(j) - 1] = float(p)
    return P

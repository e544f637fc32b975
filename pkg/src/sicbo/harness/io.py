"""CSV and JSON writers with deterministic formatting.

Floats are written with ``repr`` so they read back bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..dynamics import Trajectory

__all__ = ["write_csv", "read_csv", "write_json", "read_json", "write_trajectory", "read_trajectory"]


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # JSON has no inf/nan
        return v if math.isfinite(v) else str(v)
    return v


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def trajectory_header(n_particles: int, dim: int) -> list[str]:
    head = ["step", "t"] + [f"m{k}" for k in range(dim)]
    head += [f"x{i}_{k}" for i in range(n_particles) for k in range(dim)]
    return head


def write_trajectory(path, traj: Trajectory) -> None:
    """One row per retained step: ``step, t, consensus..., particle states...``."""
    n, d = traj.n_particles, traj.dim
    flat = traj.states.reshape(traj.states.shape[0], n * d)
    rows = (
        [int(s), float(t), *map(float, m), *map(float, x)]
        for s, t, m, x in zip(traj.steps, traj.times, traj.consensus, flat)
    )
    write_csv(path, trajectory_header(n, d), rows)


def read_trajectory(path) -> dict:
    """Arrays ``steps, times, consensus, states`` from a trajectory CSV."""
    header, rows = read_csv(path)
    d = sum(1 for h in header if h.startswith("m"))
    n = (len(header) - 2 - d) // d
    a = np.array([[float(c) for c in row] for row in rows]).reshape(len(rows), len(header))
    return {
        "steps": a[:, 0].astype(int),
        "times": a[:, 1],
        "consensus": a[:, 2:2 + d],
        "states": a[:, 2 + d:].reshape(len(rows), n, d),
    }

"""Exploration quality (EQS) and efficiency (EES) scores for trajectories.

The plane is cut into square cells anchored at the map origin and into
annuli of width ``annulus_width`` centred on the spawn point.  A visited
cell contributes its annulus index ``n`` (the ring its centre falls in,
counting from 1).
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_CELL_AREA = 2.0
DEFAULT_ANNULUS = 10.0
FORMULAS = ("cells", "literal")
COVERAGE = ("path", "samples")


class TrajectoryError(ValueError):
    pass


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    origin: tuple[float, float] | None = None
    reward: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.psi = np.asarray(self.psi, dtype=np.float64)
        n = len(self.t)
        if n == 0:
            raise TrajectoryError("trajectory is empty")
        if not (len(self.x) == len(self.y) == len(self.psi) == n):
            raise TrajectoryError("column lengths differ")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise TrajectoryError("timestamps must be strictly increasing")
        if self.origin is None:
            self.origin = (float(self.x[0]), float(self.y[0]))

    @classmethod
    def from_points(cls, xy, dt: float = 0.1, origin=None) -> "Trajectory":
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        n = len(xy)
        return cls(np.arange(n) * dt, xy[:, 0], xy[:, 1], np.zeros(n), origin)

    def __len__(self) -> int:
        return len(self.t)


def path_length(traj: Trajectory) -> float:
    return float(np.sum(np.hypot(np.diff(traj.x), np.diff(traj.y))))


@dataclass
class SegmentationReport:
    cell_size: float
    annulus_width: float
    visited: frozenset = field(default_factory=frozenset)  # {((i, j), n)}
    per_annulus_counts: dict = field(default_factory=dict)  # n -> k_n

    @property
    def n_max(self) -> int:
        return max(self.per_annulus_counts, default=0)


def _segment_cells(x0, y0, x1, y1, s):
    """Grid cells crossed by a segment (half-open cells ``[i*s, (i+1)*s)``)."""
    i, j = math.floor(x0 / s), math.floor(y0 / s)
    i_end, j_end = math.floor(x1 / s), math.floor(y1 / s)
    cells = [(i, j)]
    dx, dy = x1 - x0, y1 - y0
    step_i = 1 if dx > 0 else -1
    step_j = 1 if dy > 0 else -1
    t_x = ((i + (dx > 0)) * s - x0) / dx if dx else math.inf
    t_y = ((j + (dy > 0)) * s - y0) / dy if dy else math.inf
    dt_x = s / abs(dx) if dx else math.inf
    dt_y = s / abs(dy) if dy else math.inf
    for _ in range(abs(i_end - i) + abs(j_end - j)):
        if (i, j) == (i_end, j_end):
            break
        if t_x < t_y:
            i += step_i
            t_x += dt_x
        elif t_y < t_x:
            j += step_j
            t_y += dt_y
        else:  # exactly through a lattice corner: the side cells are only touched
            i += step_i
            j += step_j
            t_x += dt_x
            t_y += dt_y
        cells.append((i, j))
    if cells[-1] != (i_end, j_end):
        cells.append((i_end, j_end))
    return cells


def annulus_index(cx, cy, origin, annulus_width) -> int:
    d = math.hypot(cx - origin[0], cy - origin[1])
    return max(1, math.ceil(d / annulus_width))


def segment_trajectory(traj: Trajectory, cell_size: float = math.sqrt(DEFAULT_CELL_AREA),
                       annulus_width: float = DEFAULT_ANNULUS, coverage: str = "path") -> SegmentationReport:
    """Visited cells with their annulus index.

    ``coverage="path"`` counts every cell the polyline passes through, so the
    result does not depend on how densely the path is sampled;
    ``coverage="samples"`` counts only cells that contain a sample.
    """
    if cell_size <= 0 or annulus_width <= 0:
        raise ValueError("cell_size and annulus_width must be positive")
    if coverage not in COVERAGE:
        raise ValueError(f"coverage must be one of {COVERAGE}")
    s = float(cell_size)
    cells = {(math.floor(x / s), math.floor(y / s)) for x, y in zip(traj.x, traj.y)}
    if coverage == "path":
        for k in range(len(traj) - 1):
            cells.update(_segment_cells(traj.x[k], traj.y[k], traj.x[k + 1], traj.y[k + 1], s))
    visited = frozenset(
        (c, annulus_index((c[0] + 0.5) * s, (c[1] + 0.5) * s, traj.origin, annulus_width)) for c in cells
    )
    counts = Counter(n for _, n in visited)
    return SegmentationReport(s, float(annulus_width), visited, dict(sorted(counts.items())))


def eqs(report: SegmentationReport, formula: str = "cells") -> float:
    """Annulus-weighted cell count.

    ``cells``: sum over annuli of ``n * k_n``.  ``literal``: sum of
    ``n * (1 + 2 + ... + k_n)``, the triangular reading of the inner sum.
    """
    if formula == "cells":
        return float(sum(n * k for n, k in report.per_annulus_counts.items()))
    if formula == "literal":
        return float(sum(n * k * (k + 1) // 2 for n, k in report.per_annulus_counts.items()))
    raise ValueError(f"formula must be one of {FORMULAS}")


def ees(eqs_score: float, d: float) -> float:
    if not d > 0:
        raise ValueError("EES is undefined for a zero-length trajectory")
    return float(eqs_score) / float(d)


def score_trajectory(traj: Trajectory, cell_area: float = DEFAULT_CELL_AREA,
                     annulus_width: float = DEFAULT_ANNULUS, formula: str = "cells",
                     coverage: str = "path") -> dict:
    """EQS, EES and path length; EES is ``None`` when the vehicle never moved."""
    report = segment_trajectory(traj, math.sqrt(cell_area), annulus_width, coverage)
    score = eqs(report, formula)
    d = path_length(traj)
    return {"eqs": score, "ees": ees(score, d) if d > 0 else None, "path_length": d,
            "cells": len(report.visited), "n_max": report.n_max}


# ---------------------------------------------------------------- CSV

TRAJECTORY_HEADER = ["t", "x", "y", "psi", "reward"]


def write_trajectory_csv(path, rows) -> None:
    """Write ``(t, x, y, psi, reward)`` rows with full float precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def parse_trajectory_csv(text: str, origin=None, source: str = "<csv>") -> Trajectory:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise TrajectoryError(f"{source}: line 1: empty file") from None
    missing = [c for c in ("t", "x", "y", "psi") if c not in header]
    if missing:
        raise TrajectoryError(f"{source}: line 1: header lacks column(s) {', '.join(missing)}")
    cols = {name: header.index(name) for name in header}
    data = {name: [] for name in header}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise TrajectoryError(f"{source}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        for name, idx in cols.items():
            try:
                data[name].append(float(row[idx]))
            except ValueError:
                raise TrajectoryError(f"{source}: line {lineno}: bad number {row[idx]!r} in column {name}") from None
    try:
        return Trajectory(data["t"], data["x"], data["y"], data["psi"], origin,
                          np.asarray(data["reward"]) if "reward" in data else None)
    except TrajectoryError as exc:
        raise TrajectoryError(f"{source}: {exc}") from None


def read_trajectory_csv(path, origin=None) -> Trajectory:
    return parse_trajectory_csv(Path(path).read_text(), origin, str(path))

"""Snap crash events onto segments and tabulate counts by severity."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from shapely import STRtree
from shapely.geometry import LineString, Point

from .network import NetworkLattice

SEVERE, SLIGHT = 1, 2
DEFAULT_MAX_DISTANCE = 10.0


@dataclass(frozen=True)
class CrashEvent:
    id: Hashable
    x: float
    y: float
    severity: int
    year: int | None = None

    def __post_init__(self):
        if self.severity not in (SEVERE, SLIGHT):
            raise ValueError(f"event {self.id}: severity must be 1 or 2, got {self.severity}")
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"event {self.id}: non-finite location")


@dataclass(frozen=True)
class Assignment:
    event_id: Hashable
    segment_id: int
    distance: float
    severity: int


@dataclass(frozen=True)
class Discard:
    event_id: Hashable
    nearest_segment_id: int | None
    distance: float


@dataclass(frozen=True)
class CountMatrix:
    """Observed counts ``Y[i, j]`` for segment ``i`` and severity level ``j``."""

    Y: np.ndarray
    segment_ids: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y)
        if Y.ndim != 2 or np.any(Y < 0):
            raise ValueError("counts must be a non-negative n x J matrix")
        object.__setattr__(self, "Y", Y.astype(np.int64))
        object.__setattr__(self, "segment_ids", np.asarray(self.segment_ids))

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def J(self) -> int:
        return self.Y.shape[1]


def snap_events(events: Sequence[CrashEvent], lattice: NetworkLattice, max_dist: float = DEFAULT_MAX_DISTANCE, tie_tol: float = 1e-9):
    """Assign each event to its nearest segment within ``max_dist`` metres.

    Distance is the exact point-to-polyline distance. Segments whose
    distance is within ``tie_tol`` of the minimum are treated as tied, and
    the smallest segment id wins.

    Returns
    -------
    assignments : list of Assignment
    discarded : list of Discard
        Events farther than ``max_dist`` from every segment, with the
        distance to the nearest one.
    """
    lines = [LineString(s.polyline) for s in lattice.segments]
    ids = lattice.ids
    tree = STRtree(lines)
    assignments, discarded = [], []
    for ev in events:
        p = Point(ev.x, ev.y)
        k0 = int(tree.nearest(p))
        dmin = lines[k0].distance(p)
        cand = tree.query(p, predicate="dwithin", distance=dmin + tie_tol)
        best_id, best_d = int(ids[k0]), dmin
        for k in cand:
            d = lines[int(k)].distance(p)
            if d <= dmin + tie_tol and int(ids[k]) < best_id:
                best_id, best_d = int(ids[k]), d
        if best_d <= max_dist:
            assignments.append(Assignment(ev.id, best_id, float(best_d), ev.severity))
        else:
            discarded.append(Discard(ev.id, best_id, float(best_d)))
    return assignments, discarded


def count_by_severity(assignments: Sequence[Assignment], segment_ids: Sequence[int], J: int = 2) -> CountMatrix:
    """Counts per (segment, severity), rows ordered as ``segment_ids``.

    Severity code ``j`` (1-based) goes to column ``j - 1``.
    """
    segment_ids = np.asarray(segment_ids)
    pos = {int(s): k for k, s in enumerate(segment_ids)}
    Y = np.zeros((len(segment_ids), J), dtype=np.int64)
    for a in assignments:
        if a.segment_id not in pos:
            raise ValueError(f"assignment references unknown segment {a.segment_id}")
        if not 1 <= a.severity <= J:
            raise ValueError(f"severity {a.severity} outside 1..{J}")
        Y[pos[a.segment_id], a.severity - 1] += 1
    return CountMatrix(Y, segment_ids)

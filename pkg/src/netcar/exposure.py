"""Traffic exposure per segment: zone graph routing and overlay assignment."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from shapely import STRtree
from shapely.geometry import LineString, Polygon

from .network import Segment

DEFAULT_FLOW_FLOOR = 1.0


class ExposureError(ValueError):
    pass


class RoutingError(ExposureError):
    pass


@dataclass(frozen=True, eq=False)
class Zone:
    id: Hashable
    polygon: Polygon
    centroid: tuple[float, float] | None = None

    def __post_init__(self):
        poly = self.polygon
        if not isinstance(poly, Polygon):
            poly = Polygon(poly)
            object.__setattr__(self, "polygon", poly)
        if poly.is_empty or not poly.is_valid or not poly.area > 0:
            raise ExposureError(f"zone {self.id}: degenerate or invalid polygon")
        if self.centroid is None:
            c = poly.centroid
            object.__setattr__(self, "centroid", (c.x, c.y))


@dataclass(frozen=True)
class ZoneGraph:
    """Zones as vertices, shared-boundary neighbours as edges.

    ``edges`` holds positional pairs ``(a, b)`` with ``a < b``; ``weights`` the
    centroid distance of each edge.
    """

    zone_ids: tuple
    centroids: np.ndarray
    edges: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.zone_ids)

    def to_sparse(self) -> sp.csr_matrix:
        a, b = self.edges[:, 0], self.edges[:, 1]
        return sp.csr_matrix(
            (np.r_[self.weights, self.weights], (np.r_[a, b], np.r_[b, a])),
            shape=(self.n, self.n),
        )

    def neighbours(self) -> list[list[tuple[int, float]]]:
        nb: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for (a, b), w in zip(self.edges, self.weights):
            nb[a].append((int(b), float(w)))
            nb[b].append((int(a), float(w)))
        return nb


@dataclass(frozen=True)
class FlowRecord:
    origin: Hashable
    destination: Hashable
    count: float


def build_zone_graph(zones: Sequence[Zone], min_shared_length: float = 0.0) -> ZoneGraph:
    """Rook-style zone graph: an edge needs a shared boundary of positive length."""
    if len(zones) < 2:
        raise ExposureError("at least two zones are required")
    order = sorted(range(len(zones)), key=lambda k: zones[k].id)
    zones = [zones[k] for k in order]
    polys = [z.polygon for z in zones]
    tree = STRtree(polys)
    edges, weights = [], []
    for a, pa in enumerate(polys):
        for b in sorted(int(x) for x in tree.query(pa)):
            if b <= a:
                continue
            shared = pa.boundary.intersection(polys[b].boundary).length
            if shared > min_shared_length:
                ca, cb = zones[a].centroid, zones[b].centroid
                w = math.hypot(ca[0] - cb[0], ca[1] - cb[1])
                if not w > 0:
                    raise ExposureError(f"zones {zones[a].id} and {zones[b].id} share a centroid")
                edges.append((a, b))
                weights.append(w)
    return ZoneGraph(
        tuple(z.id for z in zones),
        np.array([z.centroid for z in zones], dtype=float),
        np.array(edges, dtype=np.int64).reshape(-1, 2),
        np.array(weights, dtype=float),
    )


def shortest_path(graph: ZoneGraph, origin, destination, _cache=None) -> list:
    """Shortest centroid-distance path; ties go to the lexicographically
    smallest sequence of zone ids."""
    pos = {z: k for k, z in enumerate(graph.zone_ids)}
    path = _paths_to(graph, pos[destination], [pos[origin]], graph.neighbours())[pos[origin]]
    return [graph.zone_ids[k] for k in path]


def _paths_to(graph: ZoneGraph, t: int, origins, nb, rtol=1e-9):
    dist = csgraph.dijkstra(graph.to_sparse(), directed=False, indices=t)
    ids = graph.zone_ids
    out = {}
    for o in origins:
        if not np.isfinite(dist[o]):
            raise RoutingError(f"no path from zone {ids[o]} to zone {ids[t]}")
        path = [o]
        v = o
        while v != t:
            best = None
            for u, w in nb[v]:
                if abs(w + dist[u] - dist[v]) <= rtol * max(1.0, dist[v]):
                    if best is None or ids[u] < ids[best]:
                        best = u
            path.append(best)
            v = best
        out[o] = path
    return out


def route_flows(graph: ZoneGraph, flows: Iterable[FlowRecord | tuple]) -> np.ndarray:
    """Through-traffic per zone (aligned with ``graph.zone_ids``).

    Each OD record adds its count to every zone on its shortest path,
    origin and destination included.
    """
    pos = {z: k for k, z in enumerate(graph.zone_ids)}
    by_dest: dict[int, list[tuple[int, float]]] = defaultdict(list)
    for rec in flows:
        o, d, c = (rec.origin, rec.destination, rec.count) if isinstance(rec, FlowRecord) else rec
        if not math.isfinite(c) or c < 0:
            raise ExposureError(f"invalid flow count {c} for {o}->{d}")
        for z in (o, d):
            if z not in pos:
                raise ExposureError(f"flow references unknown zone {z}")
        by_dest[pos[d]].append((pos[o], float(c)))
    through = np.zeros(graph.n)
    nb = graph.neighbours()
    for t in sorted(by_dest):
        recs = by_dest[t]
        paths = _paths_to(graph, t, sorted({o for o, _ in recs}), nb)
        for o, c in recs:
            if c:
                through[paths[o]] += c
    return through


def intersection_fractions(segment: Segment, zones: Sequence[Zone], tree: STRtree | None = None) -> dict:
    line = LineString(segment.polyline)
    polys = [z.polygon for z in zones]
    if tree is None:
        tree = STRtree(polys)
    out = {}
    for k in tree.query(line):
        frac = line.intersection(polys[int(k)]).length / line.length
        if frac > 0:
            out[zones[int(k)].id] = frac
    return out


def assign_segments_to_zones(segments: Sequence[Segment], zones: Sequence[Zone], rtol: float = 1e-9) -> dict:
    """Map each segment id to the zone covering the largest share of it.

    Near-equal shares (within ``rtol``) go to the smaller zone id.
    """
    tree = STRtree([z.polygon for z in zones])
    out, missing = {}, []
    for s in segments:
        fr = intersection_fractions(s, zones, tree)
        if not fr:
            missing.append(s.id)
            continue
        top = max(fr.values())
        out[s.id] = min(z for z, f in fr.items() if f >= top - rtol)
    if missing:
        raise ExposureError(f"segments intersecting no zone: {missing}")
    return out


@dataclass(frozen=True)
class ExposureVector:
    """Offsets ``E_i = length_km * max(zone_flow, floor)``."""

    E: np.ndarray
    length_km: np.ndarray
    zone_flow: np.ndarray
    segment_ids: np.ndarray | None = None

    def __len__(self):
        return len(self.E)


def compute_exposure(lengths, zone_flow, flow_floor: float = DEFAULT_FLOW_FLOOR, segment_ids=None) -> ExposureVector:
    lengths = np.asarray(lengths, dtype=float)
    zone_flow = np.asarray(zone_flow, dtype=float)
    if lengths.shape != zone_flow.shape:
        raise ExposureError("lengths and flows must align")
    if not (np.all(np.isfinite(lengths)) and np.all(np.isfinite(zone_flow))):
        raise ExposureError("non-finite length or flow")
    if np.any(lengths <= 0):
        raise ExposureError("segment lengths must be positive")
    if np.any(zone_flow < 0):
        raise ExposureError("zone flows must be non-negative")
    if not flow_floor > 0:
        raise ExposureError("flow_floor must be positive")
    km = lengths / 1000.0
    E = km * np.maximum(zone_flow, flow_floor)
    ids = None if segment_ids is None else np.asarray(segment_ids)
    return ExposureVector(E, km, zone_flow, ids)


def segment_exposure(segments: Sequence[Segment], zones: Sequence[Zone], flows, flow_floor: float = DEFAULT_FLOW_FLOOR):
    """Full exposure pipeline: route OD flows, overlay, compose offsets.

    Returns ``(ExposureVector, assignment)`` with ``assignment`` the
    segment-id to zone-id map.
    """
    graph = build_zone_graph(zones)
    through = dict(zip(graph.zone_ids, route_flows(graph, flows)))
    assignment = assign_segments_to_zones(segments, zones)
    zf = np.array([through[assignment[s.id]] for s in segments])
    ev = compute_exposure([s.length for s in segments], zf, flow_floor, [s.id for s in segments])
    return ev, assignment

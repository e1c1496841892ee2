"""Road-network lattice: segments, dual-graph adjacency and network transforms.

Segments are the spatial units. Two segments are neighbours when they share
an endpoint; crossing interiors (bridges, overpasses) never create adjacency.
All positional indices used by :class:`AdjacencyMatrix` refer to the order of
``NetworkLattice.segments``.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

DEFAULT_TOLERANCE = 1e-3


class NetworkError(ValueError):
    """Invalid network input (geometry, identifiers, graph structure)."""


def _piece_lengths(coords: np.ndarray) -> list[float]:
    d = np.diff(coords, axis=0)
    return [math.hypot(dx, dy) for dx, dy in d]


@dataclass(frozen=True)
class Segment:
    """A road segment with planar polyline geometry (metres)."""

    id: int
    polyline: tuple[tuple[float, float], ...]
    road_class: str = "other"
    attributes: Mapping[str, object] = field(default_factory=dict)
    length: float = field(init=False)

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.polyline)
        if len(pts) < 2:
            raise NetworkError(f"segment {self.id}: polyline needs at least 2 points")
        coords = np.asarray(pts)
        if not np.all(np.isfinite(coords)):
            raise NetworkError(f"segment {self.id}: non-finite coordinates")
        length = math.fsum(_piece_lengths(coords))
        if not length > 0:
            raise NetworkError(f"segment {self.id}: zero length")
        object.__setattr__(self, "polyline", pts)
        object.__setattr__(self, "attributes", dict(self.attributes))
        object.__setattr__(self, "length", length)

    @property
    def coords(self) -> np.ndarray:
        return np.asarray(self.polyline)

    @property
    def endpoints(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return self.polyline[0], self.polyline[-1]

    def piece_lengths(self) -> list[float]:
        return _piece_lengths(self.coords)


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Sparse symmetric binary neighbourhood matrix ``W``.

    ``pairs`` holds each unordered neighbour pair once as ``(i, i')`` with
    ``i < i'`` (positional indices), sorted lexicographically.
    """

    n: int
    pairs: np.ndarray
    order: int = 1
    variant: str = "shared-endpoint"
    threshold: float | None = None

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        if p.size:
            p = np.sort(p, axis=1)
            if np.any(p[:, 0] == p[:, 1]):
                raise NetworkError("adjacency contains self-pairs")
            if p.min() < 0 or p.max() >= self.n:
                raise NetworkError("adjacency pair index out of range")
            p = np.unique(p, axis=0)
        object.__setattr__(self, "pairs", p)

    @classmethod
    def from_sparse(cls, mat, **kwargs) -> "AdjacencyMatrix":
        coo = sp.triu(sp.csr_matrix(mat), k=1).tocoo()
        keep = coo.data != 0
        pairs = np.column_stack([coo.row[keep], coo.col[keep]])
        return cls(n=mat.shape[0], pairs=pairs, **kwargs)

    def to_sparse(self) -> sp.csr_matrix:
        if len(self.pairs) == 0:
            return sp.csr_matrix((self.n, self.n))
        i, j = self.pairs[:, 0], self.pairs[:, 1]
        data = np.ones(2 * len(i))
        return sp.csr_matrix(
            (data, (np.r_[i, j], np.r_[j, i])), shape=(self.n, self.n)
        )

    def dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    @property
    def degrees(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=np.int64)
        np.add.at(m, self.pairs.ravel(), 1)
        return m

    def neighbours(self, i: int) -> list[int]:
        p = self.pairs
        return sorted(p[p[:, 0] == i, 1].tolist() + p[p[:, 1] == i, 0].tolist())

    def subset(self, keep: Sequence[int]) -> "AdjacencyMatrix":
        """Restrict to positional indices ``keep`` (in the given order)."""
        keep = np.asarray(keep, dtype=np.int64)
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        p = remap[self.pairs] if len(self.pairs) else self.pairs
        p = p[(p >= 0).all(axis=1)] if len(p) else p
        return AdjacencyMatrix(len(keep), p, self.order, self.variant, self.threshold)


@dataclass(frozen=True)
class ComponentLabeling:
    labels: np.ndarray
    component_sizes: dict[int, int]

    @property
    def n_components(self) -> int:
        return len(self.component_sizes)


@dataclass(frozen=True)
class NetworkLattice:
    segments: tuple[Segment, ...]
    adjacency: AdjacencyMatrix
    endpoint_index: dict[tuple[float, float], frozenset[int]]
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if self.adjacency.n != len(self.segments):
            raise NetworkError("adjacency dimension does not match segment count")

    @property
    def n(self) -> int:
        return len(self.segments)

    @property
    def ids(self) -> np.ndarray:
        return np.array([s.id for s in self.segments], dtype=np.int64)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([s.length for s in self.segments])

    def total_length(self) -> float:
        """Correctly rounded sum of every polyline piece in the network."""
        return math.fsum(x for s in self.segments for x in s.piece_lengths())

    def position(self, segment_id: int) -> int:
        return self._positions[segment_id]

    @property
    def _positions(self) -> dict[int, int]:
        return {s.id: k for k, s in enumerate(self.segments)}


def _check_ids(segments: Sequence[Segment]) -> None:
    seen = set()
    for s in segments:
        if s.id in seen:
            raise NetworkError(f"duplicate segment id {s.id}")
        seen.add(s.id)


def _endpoint_array(segments: Sequence[Segment]) -> np.ndarray:
    pts = np.empty((2 * len(segments), 2))
    for k, s in enumerate(segments):
        pts[2 * k] = s.polyline[0]
        pts[2 * k + 1] = s.polyline[-1]
    return pts


def _close_endpoint_pairs(pts: np.ndarray, tolerance: float) -> np.ndarray:
    if len(pts) < 2:
        return np.empty((0, 2), dtype=np.int64)
    tree = cKDTree(pts)
    return tree.query_pairs(r=tolerance, output_type="ndarray")


def _endpoint_vertices(segments: Sequence[Segment], tolerance: float):
    """Cluster segment endpoints into graph vertices.

    Returns ``(vertex_coords, ends)`` where ``ends[k] = (u, v)`` are the
    vertex indices of the two endpoints of segment ``k``. Clusters are the
    connected components of the "within tolerance" relation; the vertex
    coordinate is that of the first endpoint in the cluster.
    """
    pts = _endpoint_array(segments)
    pairs = _close_endpoint_pairs(pts, tolerance)
    m = len(pts)
    g = sp.csr_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m)
    ) if len(pairs) else sp.csr_matrix((m, m))
    _, lab = csgraph.connected_components(g, directed=False)
    # relabel clusters in order of first appearance
    first = {}
    vid = np.empty(m, dtype=np.int64)
    coords = []
    for k, c in enumerate(lab):
        if c not in first:
            first[c] = len(coords)
            coords.append(pts[k])
        vid[k] = first[c]
    return np.asarray(coords), vid.reshape(-1, 2)


def build_dual_graph(segments: Sequence[Segment], tolerance: float = DEFAULT_TOLERANCE) -> AdjacencyMatrix:
    """First-order shared-endpoint adjacency among ``segments``.

    Parameters
    ----------
    segments : sequence of Segment
    tolerance : float
        Two endpoints closer than this (metres) count as the same point.
    """
    if tolerance < 0:
        raise NetworkError("tolerance must be non-negative")
    _check_ids(segments)
    pts = _endpoint_array(segments)
    pairs = _close_endpoint_pairs(pts, tolerance)
    if len(pairs):
        seg = pairs // 2
        seg = seg[seg[:, 0] != seg[:, 1]]
    else:
        seg = np.empty((0, 2), dtype=np.int64)
    return AdjacencyMatrix(n=len(segments), pairs=seg, order=1, variant="shared-endpoint")


def build_lattice(segments: Sequence[Segment], tolerance: float = DEFAULT_TOLERANCE) -> NetworkLattice:
    segments = tuple(segments)
    adj = build_dual_graph(segments, tolerance)
    decimals = max(0, int(round(-math.log10(tolerance)))) if tolerance > 0 else 9
    index: dict[tuple[float, float], set[int]] = defaultdict(set)
    for s in segments:
        for x, y in s.endpoints:
            index[(round(x, decimals), round(y, decimals))].add(s.id)
    return NetworkLattice(
        segments, adj, {k: frozenset(v) for k, v in index.items()}, tolerance
    )


def connected_components(adjacency: AdjacencyMatrix, ids: Sequence[int] | None = None) -> ComponentLabeling:
    """Connected components, labelled 0.. in order of their smallest member.

    "Smallest member" uses ``ids`` when given, positional index otherwise.
    """
    n = adjacency.n
    if n == 0:
        return ComponentLabeling(np.empty(0, dtype=np.int64), {})
    _, raw = csgraph.connected_components(adjacency.to_sparse(), directed=False)
    key = np.arange(n) if ids is None else np.asarray(ids)
    smallest = {}
    for k in range(n):
        c = raw[k]
        if c not in smallest or key[k] < smallest[c]:
            smallest[c] = key[k]
    order = sorted(smallest, key=lambda c: smallest[c])
    relabel = {c: r for r, c in enumerate(order)}
    labels = np.array([relabel[c] for c in raw], dtype=np.int64)
    sizes = {r: int(np.sum(labels == r)) for r in range(len(order))}
    return ComponentLabeling(labels, sizes)


@dataclass(frozen=True)
class RemovalReport:
    removed_ids: tuple[int, ...]
    removed_length: float

    @property
    def empty(self) -> bool:
        return not self.removed_ids


def subset_lattice(lattice: NetworkLattice, keep: Sequence[int]) -> NetworkLattice:
    keep = list(keep)
    segs = tuple(lattice.segments[k] for k in keep)
    kept_ids = {s.id for s in segs}
    index = {
        k: frozenset(v & kept_ids) for k, v in lattice.endpoint_index.items() if v & kept_ids
    }
    return NetworkLattice(segs, lattice.adjacency.subset(keep), index, lattice.tolerance)


def drop_islands(lattice: NetworkLattice) -> tuple[NetworkLattice, RemovalReport]:
    """Keep only the largest connected component.

    Ties in size go to the component holding the smallest segment id.
    """
    lab = connected_components(lattice.adjacency, lattice.ids)
    if lab.n_components <= 1:
        return lattice, RemovalReport((), 0.0)
    # labels are ordered by smallest member id, so max() breaks ties correctly
    best = max(lab.component_sizes, key=lambda c: (lab.component_sizes[c], -c))
    keep = np.flatnonzero(lab.labels == best)
    drop = np.flatnonzero(lab.labels != best)
    removed = tuple(sorted(int(lattice.segments[k].id) for k in drop))
    length = math.fsum(lattice.segments[k].length for k in drop)
    return subset_lattice(lattice, keep), RemovalReport(removed, length)


def higher_order_adjacency(W: AdjacencyMatrix, order: int) -> AdjacencyMatrix:
    """Neighbours up to graph distance ``order`` (2 or 3) in the dual graph."""
    if order not in (2, 3):
        raise NetworkError(f"order must be 2 or 3, got {order}")
    if W.order != 1:
        raise NetworkError("higher-order neighbourhoods are built from a first-order W")
    if W.n == 0:
        return AdjacencyMatrix(0, np.empty((0, 2)), order, W.variant)
    dist = csgraph.dijkstra(W.to_sparse(), directed=False, unweighted=True, limit=order + 0.5)
    i, j = np.nonzero(np.isfinite(dist) & (dist >= 1))
    keep = i < j
    return AdjacencyMatrix(W.n, np.column_stack([i[keep], j[keep]]), order, W.variant)


def distance_threshold_adjacency(lattice: NetworkLattice, threshold: float) -> AdjacencyMatrix:
    """Neighbours whose midpoints are within ``threshold`` metres along the network.

    The along-network distance runs from the midpoint of one segment, through
    shared endpoints, to the midpoint of the other. First-order pairs are
    always kept, so two long adjacent segments remain neighbours.
    """
    if not threshold > 0:
        raise NetworkError("threshold must be positive")
    segs = lattice.segments
    n = len(segs)
    _, ends = _endpoint_vertices(segs, lattice.tolerance)
    nv = int(ends.max()) + 1 if n else 0
    # graph nodes: endpoint vertices 0..nv-1, then midpoints nv..nv+n-1
    rows, cols, w = [], [], []
    for k, s in enumerate(segs):
        half = s.length / 2.0
        for v in ends[k]:
            rows += [nv + k, v]
            cols += [v, nv + k]
            w += [half, half]
    g = sp.csr_matrix((w, (rows, cols)), shape=(nv + n, nv + n))
    dist = csgraph.dijkstra(g, directed=True, indices=np.arange(nv, nv + n), limit=threshold * (1 + 1e-12))
    d = dist[:, nv:]
    i, j = np.nonzero(np.isfinite(d) & (d <= threshold))
    keep = i < j
    pairs = np.column_stack([i[keep], j[keep]])
    first = lattice.adjacency.pairs
    pairs = np.concatenate([pairs, first]) if len(first) else pairs
    return AdjacencyMatrix(n, pairs, order=1, variant="distance-threshold", threshold=float(threshold))


@dataclass(frozen=True)
class ContractionMap:
    """Provenance of a contraction.

    ``merged[new_id]`` lists the original ids, in chain order, that were
    fused into the new segment; ``original_to_new`` is the inverse lookup.
    """

    merged: dict[int, tuple[int, ...]]

    @property
    def original_to_new(self) -> dict[int, int]:
        return {o: new for new, olds in self.merged.items() for o in olds}

    @property
    def is_identity(self) -> bool:
        return all(len(v) == 1 for v in self.merged.values())


def _oriented(seg: Segment, start_vertex: int, ends_k) -> list[tuple[float, float]]:
    pts = list(seg.polyline)
    return pts if ends_k[0] == start_vertex else pts[::-1]


def contract_network(lattice: NetworkLattice, merge_across_class: bool = False) -> tuple[NetworkLattice, ContractionMap]:
    """Remove redundant (degree-two) vertices by merging their two segments.

    A vertex is redundant when exactly two endpoints of two *different*
    segments meet there. Merged segments take the smallest constituent id and
    the road class and attributes of the longest constituent. Segments of
    different road class are not merged unless ``merge_across_class``.
    """
    segs = lattice.segments
    n = len(segs)
    if n == 0:
        return lattice, ContractionMap({})
    _, ends = _endpoint_vertices(segs, lattice.tolerance)
    incident: dict[int, list[int]] = defaultdict(list)
    for k in range(n):
        for v in ends[k]:
            incident[int(v)].append(k)

    removable = set()
    for v, ks in incident.items():
        if len(ks) == 2 and ks[0] != ks[1]:
            a, b = segs[ks[0]], segs[ks[1]]
            if merge_across_class or a.road_class == b.road_class:
                removable.add(v)

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for v in removable:
        a, b = (find(k) for k in incident[v])
        if a != b:
            parent[max(a, b)] = min(a, b)

    groups: dict[int, list[int]] = defaultdict(list)
    for k in range(n):
        groups[find(k)].append(k)

    new_segments = []
    merged = {}
    for members in groups.values():
        if len(members) == 1:
            k = members[0]
            new_segments.append(segs[k])
            merged[segs[k].id] = (segs[k].id,)
            continue
        chain, start = _walk_chain(members, ends, incident, removable, segs)
        coords: list[tuple[float, float]] = []
        v = start
        for k in chain:
            pts = _oriented(segs[k], v, ends[k])
            if coords and coords[-1] == pts[0]:
                pts = pts[1:]
            coords.extend(pts)
            v = ends[k][1] if ends[k][0] == v else ends[k][0]
        constituents = [segs[k] for k in chain]
        longest = max(constituents, key=lambda s: (s.length, -s.id))
        new_id = min(s.id for s in constituents)
        new_segments.append(
            Segment(new_id, tuple(coords), longest.road_class, dict(longest.attributes))
        )
        merged[new_id] = tuple(s.id for s in constituents)

    order = np.argsort([s.id for s in new_segments], kind="stable")
    new_segments = [new_segments[k] for k in order]
    return build_lattice(new_segments, lattice.tolerance), ContractionMap(merged)


def _walk_chain(members, ends, incident, removable, segs):
    """Order the segments of one merge group from one retained end to the other."""
    member_set = set(members)
    start_seg, start_v = None, None
    for k in sorted(members, key=lambda k: segs[k].id):
        for v in ends[k]:
            if int(v) not in removable:
                start_seg, start_v = k, int(v)
                break
        if start_seg is not None:
            break
    if start_seg is None:
        # closed ring of redundant vertices: keep the start of the smallest id
        start_seg = min(members, key=lambda k: segs[k].id)
        start_v = int(ends[start_seg][0])
    chain = [start_seg]
    used = {start_seg}
    v = int(ends[start_seg][1]) if int(ends[start_seg][0]) == start_v else int(ends[start_seg][0])
    while v in removable and v != start_v:
        nxt = [k for k in incident[v] if k not in used and k in member_set]
        if not nxt:
            break
        k = nxt[0]
        chain.append(k)
        used.add(k)
        v = int(ends[k][1]) if int(ends[k][0]) == v else int(ends[k][0])
    return chain, start_v

import numpy as np
import pytest

from netcar.events import SEVERE, SLIGHT, CrashEvent, count_by_severity, snap_events
from netcar.network import Segment, build_lattice


def two_parallel(ids=(3, 8)):
    return build_lattice([Segment(ids[0], [(0, 0), (100, 0)]), Segment(ids[1], [(0, 10), (100, 10)])])


class TestSnap:
    def test_on_polyline(self):
        a, d = snap_events([CrashEvent("e", 40, 0, SEVERE)], two_parallel())
        assert a[0].segment_id == 3 and a[0].distance == 0 and not d

    @pytest.mark.parametrize("offset,kept", [(9.9, True), (10.0, True), (10.1, False), (11.0, False)])
    def test_ten_metre_rule(self, offset, kept):
        lat = build_lattice([Segment(1, [(0, 0), (100, 0)])])
        a, d = snap_events([CrashEvent(0, 50, -offset, SLIGHT)], lat)
        assert (len(a) == 1) == kept and len(a) + len(d) == 1
        if not kept:
            assert abs(d[0].distance - offset) < 1e-9 and d[0].nearest_segment_id == 1

    def test_beyond_end_uses_piece_distance(self):
        lat = build_lattice([Segment(1, [(0, 0), (100, 0)])])
        a, _ = snap_events([CrashEvent(0, 106, 8, SLIGHT)], lat)
        assert a[0].distance == 10.0

    @pytest.mark.parametrize("ids", [(3, 8), (8, 3)])
    def test_equidistant_smaller_id(self, ids):
        a, _ = snap_events([CrashEvent(0, 50, 5, SEVERE)], two_parallel(ids))
        assert a[0].segment_id == 3 and abs(a[0].distance - 5) < 1e-12

    def test_shared_vertex_tie(self):
        lat = build_lattice([Segment(7, [(0, 0), (10, 0)]), Segment(2, [(10, 0), (20, 0)]), Segment(5, [(10, 0), (10, 10)])])
        a, _ = snap_events([CrashEvent(0, 10, -3, SEVERE)], lat)
        assert a[0].segment_id == 2

    def test_translation_equivariant_and_counts(self):
        rng = np.random.default_rng(4)
        segs = [Segment(i, [tuple(p), tuple(p + rng.uniform(-40, 40, 2))]) for i, p in enumerate(rng.uniform(0, 200, (15, 2)))]
        evs = [CrashEvent(k, *rng.uniform(0, 200, 2), int(rng.integers(1, 3))) for k in range(100)]
        a, d = snap_events(evs, build_lattice(segs))
        assert len(a) + len(d) == 100
        shift = np.array([1234.5, -678.25])
        segs2 = [Segment(s.id, [tuple(np.add(p, shift)) for p in s.polyline]) for s in segs]
        evs2 = [CrashEvent(e.id, e.x + shift[0], e.y + shift[1], e.severity) for e in evs]
        a2, _ = snap_events(evs2, build_lattice(segs2))
        assert [x.segment_id for x in a] == [x.segment_id for x in a2]
        ids = [s.id for s in segs]
        Y = count_by_severity(a, ids).Y
        for k, sid in enumerate(ids):
            for j in (1, 2):
                assert Y[k, j - 1] == sum(1 for x in a if x.segment_id == sid and x.severity == j)
        assert Y.sum() == len(a)


class TestCounts:
    def test_empty(self):
        assert not count_by_severity([], [1, 2, 3]).Y.any()

    def test_three_slight(self):
        evs = [CrashEvent(k, 1, 0.5, SLIGHT) for k in range(3)]
        lat = build_lattice([Segment(5, [(0, 0), (2, 0)]), Segment(6, [(2, 0), (4, 0)])])
        Y = count_by_severity(snap_events(evs, lat)[0], [5, 6]).Y
        assert Y.tolist() == [[0, 3], [0, 0]]

    def test_bad_severity(self):
        with pytest.raises(ValueError):
            CrashEvent(0, 0, 0, 3)

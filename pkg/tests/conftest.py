import numpy as np
import pytest

from netcar.network import Segment, build_lattice

# Six-segment toy network. Vertex a = (0, 0) joins 1, 5, 6; c = (0, 10)
# joins 4, 5; e = (10, 10) joins 2, 4; d = (10, 0) joins 2, 3, 6. Segments 1
# and 3 have free ends, and segment 1 crosses segment 2 without sharing an
# endpoint.
TOY_COORDS = {
    1: [(0.0, 0.0), (15.0, 5.0)],
    2: [(10.0, 10.0), (10.0, 0.0)],
    3: [(10.0, 0.0), (20.0, 0.0)],
    4: [(0.0, 10.0), (10.0, 10.0)],
    5: [(0.0, 0.0), (0.0, 10.0)],
    6: [(0.0, 0.0), (10.0, 0.0)],
}

# Reference adjacency matrix supplied with the toy network (rows/columns 1..6).
PRINTED_TOY_MATRIX = np.array([
    [0, 0, 0, 0, 1, 1],
    [0, 0, 1, 1, 0, 0],
    [0, 1, 0, 0, 0, 1],
    [0, 1, 0, 0, 1, 0],
    [1, 0, 0, 1, 0, 1],
    [1, 1, 1, 0, 1, 0],
])


@pytest.fixture
def toy_segments():
    return [Segment(i, c) for i, c in TOY_COORDS.items()]


@pytest.fixture
def toy_lattice(toy_segments):
    return build_lattice(toy_segments)


def random_grid_lattice(rng, k=None, keep=0.7):
    """Random connected subnetwork of an integer grid.

    Axis-aligned unit-length edges keep every length and path sum exact
    in floating point.
    """
    k = k or int(rng.integers(3, 6))
    edges = []
    for r in range(k):
        for c in range(k):
            if c + 1 < k:
                edges.append(((c, r), (c + 1, r)))
            if r + 1 < k:
                edges.append(((c, r), (c, r + 1)))
    chosen = [e for e in edges if rng.random() < keep]
    if not chosen:
        chosen = edges[:2]
    segs = [Segment(i, [tuple(map(float, e[0])), tuple(map(float, e[1]))]) for i, e in enumerate(chosen)]
    return build_lattice(segs)


def path_segments(lengths, start_id=0):
    x = np.concatenate([[0.0], np.cumsum(lengths)])
    return [Segment(start_id + i, [(x[i], 0.0), (x[i + 1], 0.0)]) for i in range(len(lengths))]


def contraction_free_segments(k=6, spacing=100.0):
    """Full k x k street grid with a stub at each corner: no degree-2 vertex."""
    segs = []
    for r in range(k):
        for c in range(k):
            if c + 1 < k:
                segs.append([(c * spacing, r * spacing), ((c + 1) * spacing, r * spacing)])
            if r + 1 < k:
                segs.append([(c * spacing, r * spacing), (c * spacing, (r + 1) * spacing)])
    far = (k - 1) * spacing
    for x, y, dx, dy in ((0, 0, -1, -1), (far, 0, 1, -1), (0, far, -1, 1), (far, far, 1, 1)):
        segs.append([(x, y), (x + dx * spacing / 2, y + dy * spacing / 2)])
    return [Segment(i, p) for i, p in enumerate(segs)]


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)

"""Shared fixtures and independent reference implementations for the test-suite."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from trajclusivat.road_network import RoadNetwork, all_pairs_segment_distances
from trajclusivat.synthgen import _edge_lookup, grid_path, make_grid_network, node_path_to_edges
from trajclusivat.trajectories import Trajectory, TrajectoryDataset

KM_PER_CENTIDEG = 1.1119492664455877  # pi/180 * 6371 * 0.01


# --- random structures ----------------------------------------------------


def random_network(rng: np.random.Generator, max_edges: int = 12, min_nodes: int = 2) -> RoadNetwork:
    """Connected network: random spanning tree plus extra edges, random coordinates near the origin."""
    n_nodes = int(rng.integers(min_nodes, max(min_nodes, max_edges) + 1))
    n_nodes = min(n_nodes, max_edges + 1)
    nodes = [(i, float(rng.uniform(-0.05, 0.05)), float(rng.uniform(-0.05, 0.05))) for i in range(n_nodes)]
    pairs = []
    for v in range(1, n_nodes):
        pairs.append((int(rng.integers(v)), v))
    extra = int(rng.integers(0, max_edges - len(pairs) + 1))
    for _ in range(extra):
        a, b = rng.choice(n_nodes, size=2, replace=False)
        pairs.append((int(a), int(b)))
    order = rng.permutation(len(pairs))
    edges = []
    for eid, k in enumerate(order):
        a, b = pairs[k]
        # mix explicit and derived lengths; explicit ones are at least the chord so lengths stay plausible
        length = None if rng.random() < 0.5 else float(rng.uniform(0.5, 6.0))
        edges.append((eid, a, b, length))
    return RoadNetwork.build(nodes, edges)


def random_walk(net: RoadNetwork, rng: np.random.Generator, length: int) -> list[int]:
    e = int(rng.integers(net.n_edges))
    out = [e]
    for _ in range(length - 1):
        nbrs = sorted(net.edge_neighbors[out[-1]])
        if not nbrs:
            break
        out.append(int(rng.choice(nbrs)))
    return out


def simple_walk(net: RoadNetwork, rng: np.random.Generator, length: int) -> list[int]:
    """Random walk that never reuses a segment (stops early when stuck)."""
    e = int(rng.integers(net.n_edges))
    out = [e]
    while len(out) < length:
        nbrs = sorted(net.edge_neighbors[out[-1]] - set(out))
        if not nbrs:
            break
        out.append(int(rng.choice(nbrs)))
    return out


# --- oracles --------------------------------------------------------------


def _band_ok(i: int, j: int, l1: int, l2: int, w: int) -> bool:
    """Cell lies within ``w`` long-axis steps of the straight line joining both corners."""
    if l1 > l2:
        i, j, l1, l2 = j, i, l2, l1
    if l1 == 1:
        return True
    return abs(Fraction(j) - Fraction(i * (l2 - 1), l1 - 1)) <= w


def brute_dtw(a, b, dmat) -> float:
    """Enumerate every monotone warping path inside the band.

    Best path: lowest accumulated cost, shortest among costs equal up to rounding;
    returns cost / length.
    The band starts at max(1, ceil(min/2)) and widens until a path exists.
    """
    n, m = len(a), len(b)
    w = max(1, math.ceil(min(n, m) / 2))
    while True:
        ends = []
        stack = [(0, 0, float(dmat[a[0], b[0]]), 1)]
        if not _band_ok(0, 0, n, m, w):
            stack = []
        while stack:
            i, j, cost, plen = stack.pop()
            if (i, j) == (n - 1, m - 1):
                ends.append((cost, plen))
                continue
            for di, dj in ((1, 0), (0, 1), (1, 1)):
                ni, nj = i + di, j + dj
                if ni < n and nj < m and _band_ok(ni, nj, n, m, w):
                    stack.append((ni, nj, cost + float(dmat[a[ni], b[nj]]), plen + 1))
        if ends:
            low = min(c for c, _ in ends)
            tied = [(p, c) for c, p in ends if c <= low + 1e-10 * max(1.0, low)]
            plen, cost = min(tied)
            return cost / plen
        w += 1


def floyd_warshall_midpoints(net: RoadNetwork) -> np.ndarray:
    """Shortest paths on the graph where every segment is split at a midpoint node."""
    nv, ne = net.n_nodes, net.n_edges
    size = nv + ne
    d = np.full((size, size), np.inf)
    np.fill_diagonal(d, 0.0)
    for e in range(ne):
        a, b = net.endpoints(e)
        half = float(net.length[e]) / 2
        mid = nv + e
        for end in (a, b):
            d[mid, end] = min(d[mid, end], half)
            d[end, mid] = min(d[end, mid], half)
    for k in range(size):
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    return d[nv:, nv:]


def single_linkage(d: np.ndarray, k: int) -> set[frozenset[int]]:
    """Naive agglomerative single linkage down to ``k`` clusters."""
    clusters = [{i} for i in range(d.shape[0])]
    while len(clusters) > k:
        best = None
        for x, y in itertools.combinations(range(len(clusters)), 2):
            link = min(d[i, j] for i in clusters[x] for j in clusters[y])
            if best is None or link < best[0]:
                best = (link, x, y)
        _, x, y = best
        clusters[x] |= clusters[y]
        del clusters[y]
    return {frozenset(c) for c in clusters}


def minmax_closure(d: np.ndarray) -> np.ndarray:
    m = np.array(d, dtype=float)
    for k in range(m.shape[0]):
        m = np.minimum(m, np.maximum(m[:, k : k + 1], m[k : k + 1, :]))
    return m


def partition(labels) -> set[frozenset[int]]:
    groups: dict[int, set[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), set()).add(i)
    return {frozenset(g) for g in groups.values()}


def random_dissimilarity(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.random((n, n))
    d = (x + x.T) / 2
    np.fill_diagonal(d, 0.0)
    return d


# --- hand-built scenarios -------------------------------------------------


class Grid:
    """A 10x10 lattice at 0.01 degree spacing with a waypoint-to-edges helper."""

    def __init__(self, rows: int = 10, cols: int = 10, spacing: float = 0.01):
        self.rows, self.cols = rows, cols
        self.net = make_grid_network(rows, cols, spacing)
        self._lookup = _edge_lookup(self.net)
        self._dist = None

    @property
    def dist(self):
        if self._dist is None:
            self._dist = all_pairs_segment_distances(self.net)
        return self._dist

    def route(self, *waypoints) -> list[int]:
        return node_path_to_edges(grid_path(self.cols, list(waypoints)), self._lookup)


def dataset(routes: dict[int, list[int]] | list[list[int]], net: RoadNetwork) -> TrajectoryDataset:
    items = routes.items() if isinstance(routes, dict) else enumerate(routes)
    return TrajectoryDataset(tuple(Trajectory(i, tuple(r)) for i, r in items), net.ref)


# Nine trajectories on three parallel streets and a side street. Trajectory 4
# drives route 1 backwards, 7 drives route 6 backwards, 2 and 3 are pieces of 1
# and 8 is a piece of 6. The MMRS seed is chosen so the sample is {1,4,5,6,7,9}.
WALKTHROUGH_SEED = 77
WALKTHROUGH_CONFIG = dict(k_prime=4, n=6, alpha_stage1=1.0, seed=WALKTHROUGH_SEED)


def walkthrough(grid: Grid) -> TrajectoryDataset:
    a = grid.route((0, 0), (0, 8))
    b = grid.route((5, 0), (5, 8))
    routes = {
        1: a,
        2: grid.route((0, 0), (0, 5)),
        3: grid.route((0, 3), (0, 8)),
        4: a[::-1],
        5: grid.route((1, 9), (7, 9)),
        6: b,
        7: b[::-1],
        8: grid.route((5, 1), (5, 6)),
        9: grid.route((9, 0), (9, 6)),
    }
    return dataset(routes, grid.net)


def corridor_routes(grid: Grid) -> tuple[list[int], list[int]]:
    """Two routes from different sources through a shared 2-segment corridor, then apart.

    A: west along row 5 into the corridor, then north up column 5.
    B: north up column 3 into the corridor, then east along row 5.
    """
    corridor = grid.route((5, 3), (5, 5))
    a = grid.route((5, 0), (5, 3)) + corridor + grid.route((5, 5), (2, 5))
    b = grid.route((8, 3), (5, 3)) + corridor + grid.route((5, 5), (5, 8))
    return a, b


def late_divergence_routes(grid: Grid) -> tuple[list[int], list[int], list[int]]:
    """Routes P and Q share a 6-segment start with one turn, split round a lattice
    square, meet again on a junction segment J and leave J in different directions.

    P has a long tail, Q a short one. Returns (P, Q, early_detour_of_P_start).
    """
    start = grid.route((0, 0), (0, 3), (3, 3))
    detoured = grid.route((0, 0), (0, 2), (1, 2), (1, 3), (3, 3))
    p_branch = grid.route((3, 3), (3, 4), (4, 4))
    q_branch = grid.route((3, 3), (4, 3), (4, 4))
    junction = grid.route((4, 4), (5, 4))
    p = start + p_branch + junction + grid.route((5, 4), (5, 9), (9, 9))
    q = start + q_branch + junction + grid.route((5, 4), (8, 4))
    return p, q, detoured


PLANTED_WAYPOINTS = [
    [(0, 0), (0, 9), (2, 9)],
    [(9, 0), (9, 9), (7, 9)],
    [(2, 0), (7, 0), (7, 6)],
    [(2, 2), (2, 8), (6, 8)],
]


def planted(grid: Grid, per_pattern: int = 1250, truncation: float = 0.1, direction_mix: float = 0.5, seed: int = 7):
    """The four disjoint lattice patterns, each emitted in both directions."""
    from trajclusivat.synthgen import GeneratorSpec, generate

    spec = GeneratorSpec(
        grid.rows,
        grid.cols,
        0.01,
        [grid_path(grid.cols, w) for w in PLANTED_WAYPOINTS],
        per_pattern,
        direction_mix=direction_mix,
        truncation_prob=truncation,
        min_len=8,
        seed=seed,
    )
    return generate(spec, grid.net)


def adjusted_rand(labels_a, labels_b) -> float:
    from sklearn.metrics import adjusted_rand_score

    return float(adjusted_rand_score(labels_a, labels_b))


class TwoLattices:
    """Two rectangular lattices joined by one long bridge segment.

    Each lattice holds two groups of two crossing routes, which gives a
    two-level pattern hierarchy; the bridge adds a third, far coarser level.
    Lattice edges are one meridian step long, the bridge gets its haversine
    length.
    """

    def __init__(self, rows: int = 6, cols: int = 14, spacing: float = 0.01, offset_deg: float = 75.0):
        from trajclusivat.synthgen import grid_step_km

        self.rows, self.cols = rows, cols
        step = grid_step_km(spacing)
        nodes, edges = [], []
        for fam in range(2):
            base = fam * rows * cols
            for r in range(rows):
                for c in range(cols):
                    nodes.append((base + r * cols + c, r * spacing, fam * offset_deg + c * spacing))
            for r in range(rows):
                for c in range(cols):
                    u = base + r * cols + c
                    if c + 1 < cols:
                        edges.append((len(edges), u, u + 1, step))
                    if r + 1 < rows:
                        edges.append((len(edges), u, u + cols, step))
        corner = rows * cols - 1
        edges.append((len(edges), corner, rows * cols + corner, None))
        self.net = RoadNetwork.build(nodes, edges)
        self._lookup = _edge_lookup(self.net)
        self.dist = all_pairs_segment_distances(self.net)

    def route(self, fam: int, *waypoints) -> list[int]:
        base = fam * self.rows * self.cols
        nodes = [(r, c) for r, c in waypoints]
        path = [nodes[0][0] * self.cols + nodes[0][1]]
        for (r0, c0), (r1, c1) in zip(nodes, nodes[1:]):
            dr = (r1 > r0) - (r1 < r0)
            dc = (c1 > c0) - (c1 < c0)
            r, c = r0, c0
            while (r, c) != (r1, c1):
                r, c = r + dr, c + dc
                path.append(r * self.cols + c)
        return node_path_to_edges([base + v for v in path], self._lookup)

    def main(self, fam: int, col: int) -> list[int]:
        """Up two rows at ``col``, right along row 0, down two rows."""
        return self.route(fam, (2, col), (0, col), (0, col + 6), (2, col + 6))

    def branch(self, fam: int, col: int) -> list[int]:
        """Up column ``col + 3``, one step along row 0, down column ``col + 4``."""
        return self.route(fam, (5, col + 3), (0, col + 3), (0, col + 4), (4, col + 4))


# (shape, column offset, count). Columns 0 and 7 hold the two coarse groups.
# Within a group both shapes meet on one row-0 segment, the first segment of
# their truth halves, and leave it in different directions; a merged cluster
# therefore sends the minority shape the majority's way.
HIERARCHY = [("main", 0, 120), ("branch", 0, 80), ("main", 7, 120), ("branch", 7, 80)]


def hierarchical(world: TwoLattices) -> tuple[TrajectoryDataset, list[int]]:
    """Eight patterns: two lattices x two groups x two shapes."""
    routes, labels = [], []
    for fam in range(2):
        for k, (shape, col, count) in enumerate(HIERARCHY):
            r = getattr(world, shape)(fam, col)
            routes.extend([r] * count)
            labels.extend([fam * len(HIERARCHY) + k] * count)
    return dataset(routes, world.net), labels

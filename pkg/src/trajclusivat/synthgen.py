"""Synthetic lattice road networks and pattern-based trajectories with ground-truth labels."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .road_network import EARTH_RADIUS_KM, RoadNetwork, save_network
from .trajectories import DEFAULT_MIN_LEN, Trajectory, TrajectoryDataset, write_trajectories

FORWARD, REVERSE = 0, 1


def grid_step_km(spacing_deg: float) -> float:
    """Great-circle length of one meridian step of ``spacing_deg``."""
    return EARTH_RADIUS_KM * math.radians(spacing_deg)


def make_grid_network(
    rows: int, cols: int, spacing_deg: float, origin: tuple[float, float] = (0.0, 0.0)
) -> RoadNetwork:
    """Lattice with node ``r*cols + c`` at ``origin + (r, c) * spacing``.

    Edges are numbered row-major: for each node, its right edge then its down
    edge. Every edge gets the same length (one meridian step), so the lattice
    is uniform irrespective of latitude.
    """
    if rows < 2 or cols < 2:
        raise DataError(f"grid must be at least 2x2, got {rows}x{cols}")
    if not spacing_deg > 0:
        raise DataError("grid spacing must be positive")
    lat0, lon0 = origin
    nodes = [(r * cols + c, lat0 + r * spacing_deg, lon0 + c * spacing_deg) for r in range(rows) for c in range(cols)]
    step = grid_step_km(spacing_deg)
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((len(edges), u, u + 1, step))
            if r + 1 < rows:
                edges.append((len(edges), u, u + cols, step))
    return RoadNetwork.build(nodes, edges)


def grid_path(cols: int, waypoints: Sequence[tuple[int, int]]) -> list[int]:
    """Node path visiting ``(row, col)`` waypoints along straight lattice lines."""
    if len(waypoints) < 2:
        raise DataError("a path needs at least two waypoints")
    r, c = waypoints[0]
    path = [r * cols + c]
    for tr, tc in waypoints[1:]:
        if tr != r and tc != c:
            raise DataError(f"waypoints ({r},{c}) -> ({tr},{tc}) are not on one lattice line")
        while (r, c) != (tr, tc):
            r += (tr > r) - (tr < r)
            c += (tc > c) - (tc < c)
            path.append(r * cols + c)
    return path


@dataclass
class GeneratorSpec:
    rows: int
    cols: int
    spacing_deg: float
    patterns: list[list[int]]
    counts: list[int] | int = 100
    direction_mix: float = 0.0
    truncation_prob: float = 0.0
    detour_prob: float = 0.0
    min_len: int = DEFAULT_MIN_LEN
    seed: int = 0
    origin: tuple[float, float] = (0.0, 0.0)
    pattern_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if isinstance(self.counts, int):
            self.counts = [self.counts] * len(self.patterns)
        self.counts = [int(c) for c in self.counts]
        self.patterns = [[int(v) for v in p] for p in self.patterns]
        self.origin = tuple(self.origin)
        if not self.patterns:
            raise DataError("generator needs at least one pattern")
        if len(self.counts) != len(self.patterns):
            raise DataError("one count per pattern required")
        if any(c <= 0 for c in self.counts):
            raise DataError("pattern counts must be positive")
        for name, p in (
            ("direction_mix", self.direction_mix),
            ("truncation_prob", self.truncation_prob),
            ("detour_prob", self.detour_prob),
        ):
            if not 0.0 <= p <= 1.0:
                raise DataError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorSpec":
        doc = dict(doc)
        # patterns may be given as node ids or as lists of [row, col] waypoints
        pats = []
        for p in doc["patterns"]:
            if p and isinstance(p[0], (list, tuple)):
                pats.append(grid_path(doc["cols"], [tuple(w) for w in p]))
            else:
                pats.append(list(p))
        doc["patterns"] = pats
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "GeneratorSpec":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read generator spec {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


def _edge_lookup(net: RoadNetwork) -> dict[tuple[int, int], int]:
    return {(min(a, b), max(a, b)): e for e, (a, b) in enumerate(zip(net.edge_a.tolist(), net.edge_b.tolist()))}


def node_path_to_edges(path: Sequence[int], lookup: dict[tuple[int, int], int]) -> list[int]:
    out = []
    for u, v in zip(path, path[1:]):
        key = (min(u, v), max(u, v))
        if key not in lookup:
            raise DataError(f"nodes {u} and {v} are not adjacent in the lattice")
        out.append(lookup[key])
    return out


def is_reversed_emission(e: int, mix: float) -> bool:
    """Deterministic interleave: exactly floor(count * mix) of the first ``count`` emissions are reversed."""
    return math.floor((e + 1) * mix) > math.floor(e * mix)


def _truncate(path: list[int], rng: np.random.Generator, min_len: int) -> list[int]:
    # path is a node path, so it has len(path) - 1 edges
    n_edges = len(path) - 1
    if n_edges <= min_len:
        return path
    drop = int(rng.integers(1, n_edges - min_len + 1))
    if rng.integers(2) == 0:
        return path[drop:]
    return path[: len(path) - drop]


def _detour(path: list[int], rng: np.random.Generator, cols: int) -> list[int]:
    """Swap the corner node of one interior turn for the opposite lattice corner."""
    rc = [divmod(v, cols) for v in path]
    used = set(path)
    turns = []
    for j in range(1, len(path) - 1):
        (r0, c0), (r1, c1), (r2, c2) = rc[j - 1], rc[j], rc[j + 1]
        if (r0 == r1) != (r1 == r2):
            alt = (r0 + r2 - r1) * cols + (c0 + c2 - c1)
            if alt not in used:
                turns.append((j, alt))
    if not turns:
        return path
    j, alt = turns[int(rng.integers(len(turns)))]
    return path[:j] + [alt] + path[j + 1 :]


def generate(spec: GeneratorSpec, net: RoadNetwork) -> tuple[TrajectoryDataset, dict[int, tuple[int, int]]]:
    """Emit ``counts[p]`` trajectories per pattern with ids numbered consecutively.

    Returns the dataset and ``id -> (pattern, direction)`` with direction 0 for
    the pattern's own orientation and 1 for the reversed route.
    """
    lookup = _edge_lookup(net)
    expected_nodes = spec.rows * spec.cols
    if net.n_nodes != expected_nodes:
        raise DataError("network does not match the generator grid")
    for p, path in enumerate(spec.patterns):
        if any(not 0 <= v < expected_nodes for v in path):
            raise DataError(f"pattern {p} leaves the grid")
        node_path_to_edges(path, lookup)
        if len(path) - 1 < spec.min_len:
            raise DataError(f"pattern {p} has {len(path) - 1} segments, fewer than min_len={spec.min_len}")
        if len(set(path)) != len(path):
            raise DataError(f"pattern {p} revisits a node")

    trajs: list[Trajectory] = []
    labels: dict[int, tuple[int, int]] = {}
    tid = 0
    for p, path in enumerate(spec.patterns):
        rng = np.random.default_rng([spec.seed, p])
        for e in range(spec.counts[p]):
            nodes = list(path)
            if spec.truncation_prob > 0 and rng.random() < spec.truncation_prob:
                nodes = _truncate(nodes, rng, spec.min_len)
            if spec.detour_prob > 0 and rng.random() < spec.detour_prob:
                nodes = _detour(nodes, rng, spec.cols)
            direction = REVERSE if is_reversed_emission(e, spec.direction_mix) else FORWARD
            if direction == REVERSE:
                nodes = nodes[::-1]
            trajs.append(Trajectory(tid, tuple(node_path_to_edges(nodes, lookup))))
            labels[tid] = (p, direction)
            tid += 1
    return TrajectoryDataset(tuple(trajs), net.ref), labels


def write_labels(labels: dict[int, tuple[int, int]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "pattern", "direction"])
        for tid in sorted(labels):
            w.writerow([tid, *labels[tid]])


def read_labels(path) -> dict[int, tuple[int, int]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {int(r["id"]): (int(r["pattern"]), int(r["direction"])) for r in csv.DictReader(fh)}


def write_dataset(spec: GeneratorSpec, out_dir) -> dict[str, Path]:
    """Generate and write ``network.json``, ``trajectories.jsonl`` and ``labels.csv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net = make_grid_network(spec.rows, spec.cols, spec.spacing_deg, spec.origin)
    ds, labels = generate(spec, net)
    paths = {
        "network": out / "network.json",
        "trajectories": out / "trajectories.jsonl",
        "labels": out / "labels.csv",
    }
    save_network(net, paths["network"])
    write_trajectories(ds.trajectories, paths["trajectories"])
    write_labels(labels, paths["labels"])
    return paths

"""Map-matched trajectories: ingestion, validation, splits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import TrajectoryError
from .road_network import RoadNetwork

DEFAULT_MIN_LEN = 5
DEFAULT_MAX_LEN = 200


@dataclass(frozen=True)
class Trajectory:
    id: int
    segments: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.segments, tuple):
            object.__setattr__(self, "segments", tuple(int(s) for s in self.segments))

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[int]:
        return iter(self.segments)

    def __getitem__(self, idx):
        return self.segments[idx]

    def reversed(self) -> "Trajectory":
        return Trajectory(self.id, self.segments[::-1])


def reverse(traj: Trajectory) -> Trajectory:
    return traj.reversed()


@dataclass(frozen=True)
class TrajectoryDataset:
    trajectories: tuple[Trajectory, ...]
    network_ref: str | None = None

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        ids = [t.id for t in trajs]
        if len(set(ids)) != len(ids):
            raise TrajectoryError("trajectory ids must be unique")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __getitem__(self, idx) -> Trajectory:
        return self.trajectories[idx]

    @property
    def ids(self) -> list[int]:
        return [t.id for t in self.trajectories]

    def subset(self, indices: Iterable[int]) -> "TrajectoryDataset":
        return TrajectoryDataset(tuple(self.trajectories[i] for i in indices), self.network_ref)


class Rejection(NamedTuple):
    line_no: int
    id: int | None
    reason: str


def is_connected_sequence(segments: Sequence[int], net: RoadNetwork) -> bool:
    return all(segments[j + 1] in net.edge_neighbors[segments[j]] for j in range(len(segments) - 1))


def _check_line(obj, net: RoadNetwork, min_len: int, max_len: int) -> str | None:
    edges = obj["edges"]
    if any(not (isinstance(e, int) and 0 <= e < net.n_edges) for e in edges):
        return "unknown_edge"
    if len(edges) < min_len:
        return "too_short"
    if len(edges) > max_len:
        return "too_long"
    if not is_connected_sequence(edges, net):
        return "disconnected"
    return None


def ingest(
    path,
    net: RoadNetwork,
    min_len: int = DEFAULT_MIN_LEN,
    max_len: int = DEFAULT_MAX_LEN,
) -> tuple[TrajectoryDataset, list[Rejection]]:
    """Read a JSON Lines trajectory file, keeping only valid trajectories.

    Bad lines are rejected individually (with a reason) rather than aborting
    the run. Reasons: ``malformed``, ``unknown_edge``, ``too_short``,
    ``too_long``, ``disconnected``, ``duplicate_id``.
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise TrajectoryError(f"cannot read trajectory file {path}: {exc}") from exc

    accepted: list[Trajectory] = []
    rejected: list[Rejection] = []
    seen: set[int] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            tid = int(obj["id"])
            if not isinstance(obj["edges"], list):
                raise TypeError("edges must be a list")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            rejected.append(Rejection(line_no, None, "malformed"))
            continue
        reason = _check_line(obj, net, min_len, max_len)
        if reason is None and tid in seen:
            reason = "duplicate_id"
        if reason is not None:
            rejected.append(Rejection(line_no, tid, reason))
            continue
        seen.add(tid)
        accepted.append(Trajectory(tid, tuple(obj["edges"])))
    return TrajectoryDataset(tuple(accepted), net.ref), rejected


def write_rejection_report(rejections: Sequence[Rejection], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["line_no", "id", "reason"])
        for r in rejections:
            writer.writerow([r.line_no, "" if r.id is None else r.id, r.reason])


def write_trajectories(trajs: Iterable[Trajectory], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trajs:
            fh.write(json.dumps({"id": t.id, "edges": list(t.segments)}) + "\n")


def read_partials(path) -> list[Trajectory]:
    """Read a JSON Lines file of ``{"id", "edges"}`` without length filtering."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            out.append(Trajectory(int(obj["id"]), tuple(obj["edges"])))
    return out


def is_subtrajectory(candidate: Sequence[int], traj: Sequence[int]) -> bool:
    """True iff ``candidate`` occurs as a contiguous run inside ``traj``."""
    cand = tuple(candidate)
    seq = tuple(traj)
    p = len(cand)
    if p == 0:
        return True
    return any(seq[j : j + p] == cand for j in range(len(seq) - p + 1))


def source_segment(traj: Trajectory, net: RoadNetwork) -> tuple[int, int]:
    """Return ``(R_1, source node)``; the source node is the end of R_1 not shared with R_2."""
    if len(traj) < 2:
        raise TrajectoryError("source node is undefined for trajectories shorter than 2")
    first, second = traj[0], traj[1]
    a, b = net.endpoints(first)
    return first, (a if b in net.endpoints(second) else b)


def split_query_truth(traj: Trajectory) -> tuple[Trajectory, Trajectory]:
    if len(traj) < 2:
        raise TrajectoryError("cannot split a trajectory shorter than 2")
    cut = math.ceil(len(traj) / 2)
    return Trajectory(traj.id, traj.segments[:cut]), Trajectory(traj.id, traj.segments[cut:])


def split_train_test(
    ds: TrajectoryDataset, fraction: float, seed: int
) -> tuple[TrajectoryDataset, TrajectoryDataset]:
    if len(ds) == 0:
        raise TrajectoryError("cannot split an empty dataset")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n_train = math.floor(len(ds) * fraction + 0.5)
    perm = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(sorted(perm[:n_train])), ds.subset(sorted(perm[n_train:]))

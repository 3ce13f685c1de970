"""Per-cluster statistics, representative trajectories and hybrid nearest-prototype assignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distance import pack, query_to_many
from .errors import DataError
from .markov import TransitionCounts, TransitionMatrix, build_counts, path_probability, to_probabilities
from .road_network import SegmentDistanceMatrix

_EPS = 1e-9


@dataclass(frozen=True)
class RepresentativeTrajectory:
    segments: tuple[int, ...]
    count_score: int
    origin_fss: int


@dataclass
class ClusterModel:
    cluster_id: int
    members: list[int]
    counts: TransitionCounts
    probs: TransitionMatrix
    frs: frozenset[int]
    fss: frozenset[int]
    rt: RepresentativeTrajectory

    @property
    def size(self) -> int:
        return len(self.members)


def _frs_from_counts(counts: TransitionCounts, min_t: float) -> frozenset[int]:
    thr = min_t * counts.n_trajectories
    return frozenset(e for e, c in counts.pass_counts.items() if c >= thr - _EPS)


def _fss_from_counts(counts: TransitionCounts, frs: frozenset[int], min_t: float) -> frozenset[int]:
    thr = min_t * counts.n_trajectories
    return frozenset(e for e, c in counts.origin_counts.items() if c >= thr - _EPS and e in frs)


def _check_min_t(min_t: float) -> None:
    if not 0 < min_t <= 1:
        raise DataError("min_t must lie in (0, 1]")


def compute_frs(members: Sequence[Sequence[int]], min_t: float) -> frozenset[int]:
    """Segments traversed by at least ``min_t`` of the member trajectories."""
    _check_min_t(min_t)
    if len(members) == 0:
        raise DataError("cannot compute frequent segments of an empty cluster")
    return _frs_from_counts(build_counts(members), min_t)


def compute_fss(members: Sequence[Sequence[int]], min_t: float) -> frozenset[int]:
    """Frequent segments at which at least ``min_t`` of the members start."""
    _check_min_t(min_t)
    if len(members) == 0:
        raise DataError("cannot compute frequent source segments of an empty cluster")
    counts = build_counts(members)
    return _fss_from_counts(counts, _frs_from_counts(counts, min_t), min_t)


def grow_imaginary_trajectory(counts: TransitionCounts, frs: frozenset[int], start: int) -> tuple[list[int], int]:
    """Follow the highest-count successor from ``start`` while it is frequent and not yet visited."""
    it = [start]
    seen = {start}
    score = 0
    current = start
    while True:
        row = counts.row(current)
        if not row:
            break
        nxt = min(row, key=lambda j: (-row[j], j))
        if nxt not in frs or nxt in seen:
            break
        score += row[nxt]
        it.append(nxt)
        seen.add(nxt)
        current = nxt
    return it, score


def representative_trajectory(
    counts: TransitionCounts, frs: frozenset[int], fss: frozenset[int]
) -> RepresentativeTrajectory:
    """Best imaginary trajectory over all frequent source segments.

    Ranked by count score, then length, then lower origin id. With no
    frequent source segment, the most common source segment is grown instead.
    """
    origins = sorted(fss)
    if not origins:
        if not counts.origin_counts:
            raise DataError("cluster has no trajectories to build a representative from")
        origins = [min(counts.origin_counts, key=lambda e: (-counts.origin_counts[e], e))]
    best = None
    for origin in origins:
        it, score = grow_imaginary_trajectory(counts, frs, origin)
        key = (-score, -len(it), origin)
        if best is None or key < best[0]:
            best = (key, RepresentativeTrajectory(tuple(it), score, origin))
    return best[1]


def build_cluster(cluster_id: int, members: Sequence, min_t: float) -> ClusterModel:
    """Assemble counts, probabilities, FRS/FSS and RT for ``members`` (Trajectory objects)."""
    _check_min_t(min_t)
    if len(members) == 0:
        raise DataError(f"cluster {cluster_id} is empty")
    counts = build_counts(t.segments for t in members)
    frs = _frs_from_counts(counts, min_t)
    fss = _fss_from_counts(counts, frs, min_t)
    return ClusterModel(
        cluster_id,
        [t.id for t in members],
        counts,
        to_probabilities(counts),
        frs,
        fss,
        representative_trajectory(counts, frs, fss),
    )


class NPRIndex:
    """Clusters prepared for repeated hybrid nearest-prototype assignment."""

    def __init__(self, clusters: Sequence[ClusterModel], dist: SegmentDistanceMatrix):
        if len(clusters) == 0:
            raise DataError("hybrid NPR needs at least one cluster")
        self.clusters = sorted(clusters, key=lambda c: c.cluster_id)
        self.ids = [c.cluster_id for c in self.clusters]
        self.dist = dist
        self._rts = pack([c.rt.segments for c in self.clusters], dist)

    def path_probabilities(self, query: Sequence[int]) -> list[float]:
        return [path_probability(c.probs, query) for c in self.clusters]

    def assign(self, query: Sequence[int]) -> int:
        """Cluster id with the highest path probability, else with the nearest RT."""
        probs = self.path_probabilities(query)
        top = max(probs)
        if top > 0:
            return self.ids[probs.index(top)]
        d = query_to_many(query, self._rts, self.dist)
        return self.ids[int(np.argmin(d))]


def hybrid_npr_assign(query: Sequence[int], clusters: Sequence[ClusterModel], dist: SegmentDistanceMatrix) -> int:
    return NPRIndex(clusters, dist).assign(query)

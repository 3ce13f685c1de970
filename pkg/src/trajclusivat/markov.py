"""First-order Markov chains over road segments.

Counting is trajectory-level: a trajectory adds at most 1 to ``#(R_i, R_j)``
and at most 1 to ``#(R_i)`` however often it loops. ``p_ij`` is
``#(R_i, R_j) / #(R_i)``, so rows can sum to less than 1 (the deficit is the
mass of trajectories that ended at, or left the data after, ``R_i``).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence


@dataclass
class TransitionCounts:
    pairs: dict[tuple[int, int], int] = field(default_factory=dict)
    pass_counts: dict[int, int] = field(default_factory=dict)
    origin_counts: dict[int, int] = field(default_factory=dict)
    n_trajectories: int = 0

    def row(self, i: int) -> dict[int, int]:
        return self._rows().get(i, {})

    def _rows(self) -> dict[int, dict[int, int]]:
        rows = self.__dict__.get("_row_cache")
        if rows is None:
            rows = {}
            for (i, j), c in sorted(self.pairs.items()):
                rows.setdefault(i, {})[j] = c
            self.__dict__["_row_cache"] = rows
        return rows

    def merge(self, other: "TransitionCounts") -> "TransitionCounts":
        pairs = Counter(self.pairs)
        pairs.update(other.pairs)
        passes = Counter(self.pass_counts)
        passes.update(other.pass_counts)
        origins = Counter(self.origin_counts)
        origins.update(other.origin_counts)
        return TransitionCounts(dict(pairs), dict(passes), dict(origins), self.n_trajectories + other.n_trajectories)

    def to_triplets(self) -> list[list[int]]:
        return [[i, j, c] for (i, j), c in sorted(self.pairs.items())]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransitionCounts):
            return NotImplemented
        return (
            self.pairs == other.pairs
            and self.pass_counts == other.pass_counts
            and self.origin_counts == other.origin_counts
            and self.n_trajectories == other.n_trajectories
        )


def build_counts(trajs: Iterable[Sequence[int]]) -> TransitionCounts:
    pairs: Counter = Counter()
    passes: Counter = Counter()
    origins: Counter = Counter()
    n = 0
    for t in trajs:
        seq = tuple(t)
        n += 1
        if not seq:
            continue
        pairs.update(set(zip(seq, seq[1:])))
        passes.update(set(seq))
        origins[seq[0]] += 1
    return TransitionCounts(dict(pairs), dict(passes), dict(origins), n)


@dataclass
class TransitionMatrix:
    """Sparse row-major transition probabilities ``rows[i][j] = p_ij``."""

    rows: dict[int, dict[int, float]] = field(default_factory=dict)
    observed: frozenset[int] = frozenset()

    def get(self, i: int, j: int) -> float:
        return self.rows.get(i, {}).get(j, 0.0)

    def row_mass(self, i: int) -> float:
        return sum(self.rows.get(i, {}).values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransitionMatrix):
            return NotImplemented
        return self.rows == other.rows and self.observed == other.observed


def to_probabilities(counts: TransitionCounts) -> TransitionMatrix:
    rows: dict[int, dict[int, float]] = {}
    for (i, j), c in sorted(counts.pairs.items()):
        if c > 0 and counts.pass_counts.get(i, 0) > 0:
            rows.setdefault(i, {})[j] = c / counts.pass_counts[i]
    observed = frozenset(e for e, c in counts.pass_counts.items() if c > 0)
    return TransitionMatrix(rows, observed)


def path_probability(m: TransitionMatrix, traj: Sequence[int]) -> float:
    """Product of transition probabilities along ``traj``; 0 as soon as a transition is unseen.

    A single segment scores 1 if the chain has seen it, else 0.
    """
    seq = tuple(traj)
    if len(seq) == 0:
        return 0.0
    if len(seq) == 1:
        return 1.0 if (seq[0] in m.observed or seq[0] in m.rows) else 0.0
    p = 1.0
    rows = m.rows
    for a, b in zip(seq, seq[1:]):
        q = rows.get(a, {}).get(b, 0.0)
        if q == 0.0:
            return 0.0
        p *= q
    return p


def next_location(m: TransitionMatrix, current: int) -> int | None:
    """Most probable successor of ``current`` (lowest id on ties), or None for an unseen/empty row."""
    row = m.rows.get(current)
    if not row:
        return None
    return min(row, key=lambda j: (-row[j], j))

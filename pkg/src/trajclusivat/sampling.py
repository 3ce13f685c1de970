"""MaxiMin + proportional random sampling (MMRS) with non-directional trajDTW."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .distance import PackedTrajectories, one_to_all, pack
from .errors import DataError
from .road_network import SegmentDistanceMatrix


@dataclass
class MaximinResult:
    picks: list[int]
    radii: list[float]
    min_dist: np.ndarray
    nearest: np.ndarray
    evaluations: int = 0


@dataclass
class MMRSSample:
    distinguished: list[int]
    group_of: np.ndarray
    sample: list[int]
    seed: int
    radii: list[float] = field(default_factory=list)

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "k_prime": len(self.distinguished),
            "n": len(self.sample),
            "distinguished": [int(i) for i in self.distinguished],
            "sample": [int(i) for i in self.sample],
        }

    def save_manifest(self, path) -> None:
        Path(path).write_text(json.dumps(self.manifest(), indent=1) + "\n", encoding="utf-8")


def _distances_from(packed: PackedTrajectories, q: int, dist: SegmentDistanceMatrix, threads: int) -> np.ndarray:
    n = len(packed)
    if threads <= 1:
        return one_to_all(packed, q, dist, nd=True)
    bounds = np.linspace(0, n, threads + 1).astype(np.int64)
    parts = [np.arange(bounds[k], bounds[k + 1], dtype=np.int64) for k in range(threads)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        chunks = list(pool.map(lambda t: one_to_all(packed, q, dist, nd=True, targets=t), parts))
    return np.concatenate(chunks)


def maximin(
    trajs: Sequence[Sequence[int]] | PackedTrajectories,
    k_prime: int,
    dist: SegmentDistanceMatrix,
    seed: int,
    threads: int = 1,
    first: int | None = None,
) -> MaximinResult:
    """Pick ``k_prime`` mutually distant trajectories.

    The first pick is drawn at random from ``seed`` (or given as ``first``);
    every later pick is the unpicked trajectory whose minimum distance to the
    picks so far is largest (lowest index on ties). Distances are streamed, one row per pick, so
    exactly ``N * k_prime`` distance evaluations are made.
    """
    packed = trajs if isinstance(trajs, PackedTrajectories) else pack(trajs, dist)
    n = len(packed)
    if k_prime < 1 or k_prime > n:
        raise DataError(f"k_prime={k_prime} must lie in 1..{n}")
    if first is None:
        first = int(np.random.default_rng(seed).integers(n))
    elif not 0 <= first < n:
        raise DataError(f"first pick {first} outside 0..{n - 1}")
    picked = np.zeros(n, dtype=bool)
    picks = [first]
    radii = [math.inf]
    picked[first] = True
    min_dist = _distances_from(packed, first, dist, threads)
    nearest = np.zeros(n, dtype=np.int64)
    evaluations = n
    while len(picks) < k_prime:
        candidates = np.where(picked, -np.inf, min_dist)
        nxt = int(np.argmax(candidates))
        radii.append(float(min_dist[nxt]))
        picks.append(nxt)
        picked[nxt] = True
        d = _distances_from(packed, nxt, dist, threads)
        evaluations += n
        closer = d < min_dist
        nearest[closer] = len(picks) - 1
        min_dist = np.minimum(min_dist, d)
    # a pick always heads its own group, even when an earlier pick is a duplicate of it
    for pos, p in enumerate(picks):
        nearest[p] = pos
    return MaximinResult(picks, radii, min_dist, nearest, evaluations)


def group_by_nearest(
    trajs: Sequence[Sequence[int]] | PackedTrajectories,
    distinguished: Sequence[int],
    dist: SegmentDistanceMatrix,
) -> np.ndarray:
    """Map each trajectory to the position (in ``distinguished``) of its nearest pick."""
    if len(distinguished) == 0:
        raise DataError("need at least one distinguished trajectory")
    packed = trajs if isinstance(trajs, PackedTrajectories) else pack(trajs, dist)
    rows = np.vstack([one_to_all(packed, int(p), dist, nd=True) for p in distinguished])
    group_of = np.argmin(rows, axis=0).astype(np.int64)
    for pos, p in enumerate(distinguished):
        group_of[p] = pos
    return group_of


def allocate(group_sizes: Sequence[int], n: int) -> list[int]:
    """Per-group sample counts proportional to group size, each at least 1, summing to ``n``.

    Quotas are floored, then raised to 1 where needed; the remaining slots go
    to the largest fractional remainders (lowest group index on ties). If the
    minimum-one rule overshoots, slots are taken back from the most
    over-allocated groups.
    """
    sizes = np.asarray(group_sizes, dtype=np.int64)
    total = int(sizes.sum())
    k = len(sizes)
    if n < k:
        raise DataError(f"sample size n={n} is smaller than the number of groups {k}")
    if n > total:
        raise DataError(f"sample size n={n} exceeds population {total}")
    quota = n * sizes / total
    counts = np.minimum(np.maximum(np.floor(quota).astype(np.int64), 1), sizes)
    remainder = quota - np.floor(quota)
    order = sorted(range(k), key=lambda g: (-remainder[g], g))
    while counts.sum() < n:
        for g in order:
            if counts.sum() == n:
                break
            if counts[g] < sizes[g]:
                counts[g] += 1
    while counts.sum() > n:
        over = sorted((g for g in range(k) if counts[g] > 1), key=lambda g: (quota[g] - counts[g], g))
        counts[over[0]] -= 1
    return [int(c) for c in counts]


def proportional_sample(
    group_of: np.ndarray,
    distinguished: Sequence[int],
    n: int,
    seed: int,
) -> list[int]:
    """Draw ``n`` indices, proportionally per group, always keeping each group's distinguished member."""
    k = len(distinguished)
    if n < k:
        raise DataError(f"n={n} < k'={k}: cannot keep every distinguished trajectory")
    members = [np.flatnonzero(group_of == g) for g in range(k)]
    counts = allocate([len(m) for m in members], n)
    rng = np.random.default_rng(seed)
    sample: list[int] = []
    for g, (pool, c) in enumerate(zip(members, counts)):
        head = int(distinguished[g])
        rest = pool[pool != head]
        drawn = rng.choice(rest, size=c - 1, replace=False) if c > 1 else np.empty(0, dtype=np.int64)
        sample.append(head)
        sample.extend(int(i) for i in drawn)
    return sorted(sample)


def mmrs(
    trajs: Sequence[Sequence[int]],
    k_prime: int,
    n: int,
    dist: SegmentDistanceMatrix,
    seed: int,
    threads: int = 1,
) -> MMRSSample:
    if n < k_prime:
        raise DataError(f"n={n} must be at least k'={k_prime}")
    if n > len(trajs):
        raise DataError(f"n={n} exceeds the number of trajectories {len(trajs)}")
    packed = pack(trajs, dist)
    mm = maximin(packed, k_prime, dist, seed, threads)
    # separate stream so the sample does not depend on how many draws maximin made
    sample = proportional_sample(mm.nearest, mm.picks, n, seed + 1)
    return MMRSSample(mm.picks, mm.nearest, sample, seed, mm.radii)

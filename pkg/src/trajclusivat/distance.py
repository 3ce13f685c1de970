"""trajDTW and non-directional trajDTW on segment sequences.

The local cost of aligning segment ``a`` with segment ``b`` is the
precomputed network distance ``D_all[a, b]``. The warping window is a band of
half-width ``w = max(1, ceil(min(l1, l2) / 2))`` around the length-normalised
diagonal joining cell ``(0, 0)`` to ``(l1-1, l2-1)``. The band test is written
in integer arithmetic on the (shorter, longer) roles, so the measure is exactly
symmetric. If the band admits no monotone path from corner to corner, ``w`` is
widened one step at a time until it does; each widening is counted in
:data:`stats`.

The returned value is the minimal accumulated cost divided by the number of
cells on the optimal warping path; among equal-cost paths (up to rounding,
see :data:`COST_RTOL`) the shortest one is used.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .errors import ModelFormatError, TrajectoryError
from .road_network import SegmentDistanceMatrix

DIRECTIONAL = "directional"
NON_DIRECTIONAL = "non-directional"
_MODES = (DIRECTIONAL, NON_DIRECTIONAL)

_DN_MAGIC = b"TCVN"

# accumulated costs closer than this (relative) are the same cost summed in a
# different order; the shorter path then wins
COST_RTOL = 1e-10
_DN_VERSION = 1


@dataclass
class DTWStats:
    widened: int = 0

    def reset(self) -> None:
        self.widened = 0


stats = DTWStats()


@njit(cache=True, nogil=True)
def _in_band(i, j, l1, l2, w):
    if l1 <= l2:
        s, l, ns, nl = i, j, l1, l2
    else:
        s, l, ns, nl = j, i, l2, l1
    if ns == 1:
        return True
    return abs(s * (nl - 1) - l * (ns - 1)) <= w * (ns - 1)


@njit(cache=True, nogil=True)
def _better(c, n, best, blen):
    """(c, n) beats (best, blen): lower cost, or the same cost up to rounding and a shorter path."""
    if c == np.inf:
        return False
    if best == np.inf:
        return True
    tol = COST_RTOL * max(1.0, best)
    if c < best - tol:
        return True
    return c <= best + tol and n < blen


@njit(cache=True, nogil=True)
def _dtw_banded(a, b, dmat, w):
    n = a.shape[0]
    m = b.shape[0]
    cost = np.full((n, m), np.inf)
    plen = np.zeros((n, m), dtype=np.int64)
    for i in range(n):
        for j in range(m):
            if not _in_band(i, j, n, m, w):
                continue
            c = dmat[a[i], b[j]]
            if i == 0 and j == 0:
                cost[0, 0] = c
                plen[0, 0] = 1
                continue
            best = np.inf
            blen = 0
            if i > 0 and j > 0 and cost[i - 1, j - 1] < np.inf:
                best = cost[i - 1, j - 1]
                blen = plen[i - 1, j - 1]
            if i > 0:
                cc = cost[i - 1, j]
                if _better(cc, plen[i - 1, j], best, blen):
                    best = cc
                    blen = plen[i - 1, j]
            if j > 0:
                cc = cost[i, j - 1]
                if _better(cc, plen[i, j - 1], best, blen):
                    best = cc
                    blen = plen[i, j - 1]
            if best == np.inf:
                continue
            cost[i, j] = best + c
            plen[i, j] = blen + 1
    return cost[n - 1, m - 1], plen[n - 1, m - 1]


@njit(cache=True, nogil=True)
def base_window(l1, l2):
    s = min(l1, l2)
    return max(1, (s + 1) // 2)


@njit(cache=True, nogil=True)
def _dtw(a, b, dmat):
    """Return (normalised distance, widened flag)."""
    w = base_window(a.shape[0], b.shape[0])
    widened = 0
    while True:
        total, plen = _dtw_banded(a, b, dmat, w)
        if total < np.inf:
            return total / plen, widened
        w += 1
        widened = 1


@njit(cache=True, nogil=True)
def _nd_dtw(a, b, b_rev, dmat):
    d1, f1 = _dtw(a, b, dmat)
    d2, f2 = _dtw(a, b_rev, dmat)
    if d2 < d1:
        return d2, f1 + f2
    return d1, f1 + f2


@njit(cache=True, nogil=True)
def _one_to_all(flat, rflat, off, q, dmat, nd, targets, out):
    qa = flat[off[q] : off[q + 1]]
    widened = 0
    for k in range(targets.shape[0]):
        t = targets[k]
        b = flat[off[t] : off[t + 1]]
        if nd:
            d, f = _nd_dtw(qa, b, rflat[off[t] : off[t + 1]], dmat)
        else:
            d, f = _dtw(qa, b, dmat)
        out[k] = d
        widened += f
    return widened


@njit(cache=True, nogil=True)
def _pairwise_rows(flat, rflat, off, rows, dmat, nd, out):
    n = off.shape[0] - 1
    widened = 0
    for r in range(rows.shape[0]):
        i = rows[r]
        a = flat[off[i] : off[i + 1]]
        for j in range(i + 1, n):
            b = flat[off[j] : off[j + 1]]
            if nd:
                d, f = _nd_dtw(a, b, rflat[off[j] : off[j + 1]], dmat)
            else:
                d, f = _dtw(a, b, dmat)
            out[i, j] = d
            widened += f
    return widened


@dataclass(frozen=True)
class PackedTrajectories:
    """Trajectories concatenated into flat int arrays for the compiled kernels."""

    flat: np.ndarray
    rflat: np.ndarray
    offsets: np.ndarray

    def __len__(self) -> int:
        return len(self.offsets) - 1


def pack(seqs: Sequence[Sequence[int]], dist: SegmentDistanceMatrix | None = None) -> PackedTrajectories:
    lens = [len(s) for s in seqs]
    if any(n == 0 for n in lens):
        raise TrajectoryError("trajDTW needs non-empty trajectories")
    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum(lens, out=offsets[1:])
    flat = np.fromiter((e for s in seqs for e in s), dtype=np.int64, count=int(offsets[-1]))
    rflat = np.fromiter((e for s in seqs for e in reversed(tuple(s))), dtype=np.int64, count=int(offsets[-1]))
    if dist is not None and flat.size and (flat.min() < 0 or flat.max() >= dist.size):
        raise TrajectoryError(f"edge id outside the distance matrix range 0..{dist.size - 1}")
    return PackedTrajectories(flat, rflat, offsets)


def _as_array(seq, dist: SegmentDistanceMatrix) -> np.ndarray:
    arr = np.asarray(tuple(seq), dtype=np.int64)
    if arr.size == 0:
        raise TrajectoryError("trajDTW needs non-empty trajectories")
    if arr.min() < 0 or arr.max() >= dist.size:
        raise TrajectoryError(f"edge id outside the distance matrix range 0..{dist.size - 1}")
    return arr


def traj_dtw(t1: Sequence[int], t2: Sequence[int], dist: SegmentDistanceMatrix) -> float:
    d, widened = _dtw(_as_array(t1, dist), _as_array(t2, dist), dist.values)
    stats.widened += widened
    return float(d)


def nd_traj_dtw(t1: Sequence[int], t2: Sequence[int], dist: SegmentDistanceMatrix) -> float:
    """min(trajDTW(t1, t2), trajDTW(t1, reversed t2))."""
    b = _as_array(t2, dist)
    d, widened = _nd_dtw(_as_array(t1, dist), b, b[::-1].copy(), dist.values)
    stats.widened += widened
    return float(d)


def one_to_all(
    packed: PackedTrajectories,
    query: int,
    dist: SegmentDistanceMatrix,
    nd: bool,
    targets: np.ndarray | None = None,
) -> np.ndarray:
    """Distances from packed trajectory ``query`` to every target (default: all)."""
    if targets is None:
        targets = np.arange(len(packed), dtype=np.int64)
    out = np.empty(len(targets))
    stats.widened += _one_to_all(packed.flat, packed.rflat, packed.offsets, query, dist.values, nd, targets, out)
    return out


def query_to_many(query: Sequence[int], packed: PackedTrajectories, dist: SegmentDistanceMatrix) -> np.ndarray:
    """Directional trajDTW from an arbitrary query to every packed trajectory."""
    q = _as_array(query, dist)
    flat = np.concatenate([q, packed.flat])
    rflat = np.concatenate([q[::-1], packed.rflat])
    off = np.concatenate([[0], packed.offsets + len(q)])
    targets = np.arange(1, len(off) - 1, dtype=np.int64)
    out = np.empty(len(targets))
    stats.widened += _one_to_all(flat, rflat, off, 0, dist.values, False, targets, out)
    return out


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    mode: str

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_DN_MAGIC + struct.pack("<IIB", _DN_VERSION, self.size, _MODES.index(self.mode)))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "DistanceMatrix":
        raw = Path(path).read_bytes()
        if raw[:4] != _DN_MAGIC:
            raise ModelFormatError(f"{path}: bad magic {raw[:4]!r}")
        version, n, mode = struct.unpack("<IIB", raw[4:13])
        if version != _DN_VERSION or mode >= len(_MODES):
            raise ModelFormatError(f"{path}: unsupported header")
        body = raw[13:]
        if len(body) != 8 * n * n:
            raise ModelFormatError(f"{path}: truncated matrix body")
        return cls(np.frombuffer(body, dtype="<f8").reshape(n, n).copy(), _MODES[mode])


def pairwise_matrix(
    trajs: Sequence[Sequence[int]],
    dist: SegmentDistanceMatrix,
    mode: str = DIRECTIONAL,
    threads: int = 1,
) -> DistanceMatrix:
    """Dense symmetric matrix of (non-)directional trajDTW; upper triangle computed, then mirrored."""
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}")
    if len(trajs) == 0:
        raise TrajectoryError("pairwise_matrix needs at least one trajectory")
    packed = pack(trajs, dist)
    n = len(packed)
    out = np.zeros((n, n))
    nd = mode == NON_DIRECTIONAL
    # interleaved row assignment balances the triangular workload
    chunks = [np.arange(k, n, max(1, threads), dtype=np.int64) for k in range(max(1, threads))]
    if threads <= 1:
        widened = [_pairwise_rows(packed.flat, packed.rflat, packed.offsets, chunks[0], dist.values, nd, out)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            widened = list(
                pool.map(
                    lambda rows: _pairwise_rows(packed.flat, packed.rflat, packed.offsets, rows, dist.values, nd, out),
                    chunks,
                )
            )
    stats.widened += sum(widened)
    iu = np.triu_indices(n, 1)
    out[(iu[1], iu[0])] = out[iu]
    return DistanceMatrix(out, mode)

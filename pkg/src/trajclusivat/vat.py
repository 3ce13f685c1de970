"""VAT reordering, iVAT transform and MST-based cluster extraction."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DataError


@dataclass(frozen=True)
class VATResult:
    """Prim ordering of a dissimilarity matrix.

    ``mst_edges[z] = (parent, child, magnitude)`` in original indices, in the
    order the children were attached; ``cut_magnitudes[z]`` repeats the
    magnitudes. ``reordered[i, j] == original[perm[i], perm[j]]``.
    """

    permutation: np.ndarray
    reordered: np.ndarray
    mst_edges: list[tuple[int, int, float]]
    cut_magnitudes: np.ndarray

    @property
    def n(self) -> int:
        return len(self.permutation)


@dataclass(frozen=True)
class IvatMatrix:
    """Minimax path distances, indexed in VAT order (``permutation`` maps back)."""

    entries: np.ndarray
    permutation: np.ndarray

    def in_original_order(self) -> np.ndarray:
        inv = np.argsort(self.permutation)
        return self.entries[np.ix_(inv, inv)]


def _validate(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DataError("dissimilarity matrix must be square")
    if d.shape[0] < 2:
        raise DataError("VAT needs at least two objects")
    if not np.array_equal(d, d.T):
        raise DataError("dissimilarity matrix must be symmetric")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise DataError("dissimilarity matrix must be finite and non-negative")
    return d


def vat(d) -> VATResult:
    """Reorder ``d`` by Prim's algorithm started from an endpoint of its largest entry.

    Ties (start object, next object, attaching parent) go to the lowest index.
    """
    d = _validate(getattr(d, "values", d))
    n = d.shape[0]
    start = int(np.argmax(d) // n)
    visited = np.zeros(n, dtype=bool)
    visited[start] = True
    order = [start]
    best = d[start].copy()
    parent = np.full(n, start, dtype=np.int64)
    edges: list[tuple[int, int, float]] = []
    for _ in range(n - 1):
        cand = np.where(visited, np.inf, best)
        nxt = int(np.argmin(cand))
        edges.append((int(parent[nxt]), nxt, float(best[nxt])))
        visited[nxt] = True
        order.append(nxt)
        closer = d[nxt] < best
        parent[closer] = nxt
        best = np.minimum(best, d[nxt])
    perm = np.array(order, dtype=np.int64)
    return VATResult(perm, d[np.ix_(perm, perm)], edges, np.array([e[2] for e in edges]))


def ivat(v: VATResult) -> IvatMatrix:
    """iVAT transform via the single recursive pass over the VAT-ordered matrix."""
    ds = v.reordered
    n = ds.shape[0]
    out = np.zeros((n, n))
    for r in range(1, n):
        j = int(np.argmin(ds[r, :r]))
        out[r, j] = ds[r, j]
        others = np.arange(r) != j
        out[r, :r][others] = np.maximum(ds[r, j], out[j, :r][others])
        out[:r, r] = out[r, :r]
    return IvatMatrix(out, v.permutation)


def _components(v: VATResult, removed: set[int]) -> np.ndarray:
    n = v.n
    kept = [e for z, e in enumerate(v.mst_edges) if z not in removed]
    rows = [e[0] for e in kept]
    cols = [e[1] for e in kept]
    graph = csr_matrix((np.ones(len(kept)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    # relabel so clusters are numbered by first appearance in VAT order
    mapping: dict[int, int] = {}
    for idx in v.permutation:
        mapping.setdefault(int(labels[idx]), len(mapping))
    return np.array([mapping[int(l)] for l in labels], dtype=np.int64)


def cut_k(v: VATResult, k: int) -> np.ndarray:
    """Labels (original index order) after removing the k-1 longest MST edges.

    Among equal magnitudes the most recently inserted edge is removed first,
    which keeps every cluster a contiguous block of the VAT order.
    """
    if not 1 <= k <= v.n:
        raise DataError(f"k={k} must lie in 1..{v.n}")
    order = sorted(range(len(v.mst_edges)), key=lambda z: (-v.cut_magnitudes[z], -z))
    return _components(v, set(order[: k - 1]))


def alpha_threshold(v: VATResult, alpha: float) -> float:
    return float(alpha * np.mean(v.cut_magnitudes))


def cut_alpha(v: VATResult, alpha: float) -> np.ndarray:
    """Labels after removing every MST edge longer than ``alpha * mean(magnitudes)``."""
    if not alpha > 0:
        raise DataError("alpha must be positive")
    thr = alpha_threshold(v, alpha)
    return _components(v, {z for z, m in enumerate(v.cut_magnitudes) if m > thr})


def export_image(matrix: np.ndarray, path, fmt: str = "pgm") -> None:
    """Write a (reordered) dissimilarity image: 8-bit PGM, min-max scaled, or raw CSV.

    Small values map to dark pixels so clusters show as dark diagonal blocks.
    """
    m = np.asarray(matrix, dtype=float)
    if fmt == "csv":
        np.savetxt(path, m, delimiter=",", fmt="%.10g")
        return
    if fmt != "pgm":
        raise ValueError(f"unknown image format {fmt!r}")
    lo, hi = float(m.min()), float(m.max())
    scaled = np.zeros_like(m) if hi == lo else (m - lo) / (hi - lo)
    pixels = np.round(scaled * 255).astype(np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())

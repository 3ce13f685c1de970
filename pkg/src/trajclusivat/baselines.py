"""Comparison predictors: a single global chain, a mixture of Markov chains (EM), and NETSCAN-style dense paths."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.special import logsumexp

from .distance import nd_traj_dtw
from .errors import DataError, NetworkMismatchError
from .markov import TransitionCounts, TransitionMatrix, build_counts, to_probabilities
from .persistence import counts_from_dict, counts_to_dict
from .road_network import RoadNetwork, SegmentDistanceMatrix
from .trajectories import TrajectoryDataset

logger = logging.getLogger(__name__)

MMM_EPS = 1e-6
NETSCAN_MIN_PATH = 6


def _segments(ds) -> list[tuple[int, ...]]:
    return [tuple(t.segments) if hasattr(t, "segments") else tuple(t) for t in ds]


# --- global chain ---------------------------------------------------------


def global_mm_train(ds) -> TransitionMatrix:
    """One first-order chain over every trajectory."""
    seqs = _segments(ds)
    if not seqs:
        raise DataError("cannot train a chain on an empty dataset")
    return to_probabilities(build_counts(seqs))


@dataclass
class GlobalMarkovModel:
    counts: TransitionCounts
    network_ref: str | None = None

    method = "global"

    def __post_init__(self):
        self.global_chain = to_probabilities(self.counts)

    @classmethod
    def train(cls, ds, network_ref: str | None = None) -> "GlobalMarkovModel":
        seqs = _segments(ds)
        if not seqs:
            raise DataError("cannot train a chain on an empty dataset")
        return cls(build_counts(seqs), network_ref if network_ref is not None else getattr(ds, "network_ref", None))

    def select_chain(self, window, full_history: bool = True) -> tuple[int, TransitionMatrix]:
        return 0, self.global_chain

    def bind(self, dist: SegmentDistanceMatrix, net: RoadNetwork | None = None):
        _check_ref(self.network_ref, dist, net)
        return self

    def to_dict(self) -> dict:
        return {"network_ref": self.network_ref, "counts": counts_to_dict(self.counts)}

    @classmethod
    def from_dict(cls, doc: dict) -> "GlobalMarkovModel":
        return cls(counts_from_dict(doc["counts"]), doc["network_ref"])


def _check_ref(model_ref, dist, net) -> None:
    ref = net.ref if net is not None else (dist.network_ref if dist is not None else None)
    if ref is not None and model_ref is not None and ref != model_ref:
        raise NetworkMismatchError(f"model was trained on network {model_ref}, got network {ref}")


# --- mixture of Markov chains ---------------------------------------------


@dataclass
class _MixtureData:
    support: list[tuple[int, int]]  # all observed transitions, sorted
    pair_index: dict[tuple[int, int], int]
    pair_source: np.ndarray  # source-segment slot of each support pair
    sources: list[int]
    starts: list[int]  # all observed first segments, sorted
    start_index: dict[int, int]
    X: csr_matrix  # N x |support| transition multiplicities
    S: csr_matrix  # N x |starts| one-hot first segment


def _mixture_data(seqs: Sequence[Sequence[int]]) -> _MixtureData:
    pairs = sorted({p for s in seqs for p in zip(s, s[1:])})
    pair_index = {p: k for k, p in enumerate(pairs)}
    sources = sorted({i for i, _ in pairs})
    src_slot = {i: k for k, i in enumerate(sources)}
    pair_source = np.array([src_slot[i] for i, _ in pairs], dtype=np.int64)
    starts = sorted({s[0] for s in seqs})
    start_index = {e: k for k, e in enumerate(starts)}
    rows, cols = [], []
    for n, s in enumerate(seqs):
        for p in zip(s, s[1:]):
            rows.append(n)
            cols.append(pair_index[p])
    X = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(seqs), len(pairs)))
    X.sum_duplicates()
    S = csr_matrix(
        (np.ones(len(seqs)), (np.arange(len(seqs)), [start_index[s[0]] for s in seqs])),
        shape=(len(seqs), len(starts)),
    )
    return _MixtureData(pairs, pair_index, pair_source, sources, starts, start_index, X, S)


def _normalize_rows(counts: np.ndarray, pair_source: np.ndarray, n_sources: int, eps: float) -> np.ndarray:
    """Per component, normalize smoothed pair counts within each source segment."""
    sm = counts + eps
    out = np.empty_like(sm)
    for c in range(sm.shape[0]):
        denom = np.bincount(pair_source, weights=sm[c], minlength=n_sources)
        out[c] = sm[c] / denom[pair_source]
    return out


def _farthest_first_init(X: csr_matrix, C: int, rng: np.random.Generator) -> np.ndarray:
    """Hard responsibilities from farthest-first seeds under Jaccard distance of transition sets."""
    B = (X > 0).astype(np.float64).tocsr()
    size = np.asarray(B.sum(axis=1)).ravel()
    N = B.shape[0]

    def jaccard_to(i: int) -> np.ndarray:
        inter = np.asarray((B @ B[i].T).todense()).ravel()
        union = size + size[i] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            sim = np.where(union > 0, inter / union, 1.0)
        return 1.0 - sim

    seeds = [int(rng.integers(N))]
    dmin = jaccard_to(seeds[0])
    dists = [dmin.copy()]
    for _ in range(1, C):
        nxt = int(np.argmax(dmin))
        seeds.append(nxt)
        d = jaccard_to(nxt)
        dists.append(d)
        dmin = np.minimum(dmin, d)
    nearest = np.argmin(np.vstack(dists), axis=0)
    R = np.zeros((N, C))
    R[np.arange(N), nearest] = 1.0
    return R


@dataclass
class MMMModel:
    weights: np.ndarray
    init_probs: np.ndarray  # C x |starts|
    trans_probs: np.ndarray  # C x |support|
    support: list[tuple[int, int]]
    starts: list[int]
    network_ref: str | None = None
    responsibilities: np.ndarray | None = field(default=None, repr=False)
    objective_trace: list[float] = field(default_factory=list, repr=False)
    loglik_trace: list[float] = field(default_factory=list, repr=False)
    global_counts: TransitionCounts | None = field(default=None, repr=False)

    method = "mmm"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.init_probs = np.asarray(self.init_probs, dtype=float)
        self.trans_probs = np.asarray(self.trans_probs, dtype=float)
        self._pair_index = {p: k for k, p in enumerate(self.support)}
        self._start_index = {e: k for k, e in enumerate(self.starts)}
        self.chains = [self._chain(c) for c in range(self.components)]
        if self.global_counts is None:
            self.global_chain = TransitionMatrix()
        else:
            self.global_chain = to_probabilities(self.global_counts)

    @property
    def components(self) -> int:
        return len(self.weights)

    def _chain(self, c: int) -> TransitionMatrix:
        rows: dict[int, dict[int, float]] = {}
        for (i, j), p in zip(self.support, self.trans_probs[c]):
            rows.setdefault(i, {})[j] = float(p)
        observed = frozenset(i for i, _ in self.support) | frozenset(j for _, j in self.support) | frozenset(self.starts)
        return TransitionMatrix(rows, observed)

    def component_scores(self, window: Sequence[int], full_history: bool = True) -> np.ndarray:
        """Unnormalized log posterior of each component given ``window``.

        Transitions and start segments never seen in training carry no
        information about the component and are skipped. The start term only
        applies when ``window`` is the real beginning of the trajectory.
        """
        score = np.log(self.weights).copy()
        if full_history and window and window[0] in self._start_index:
            score += np.log(self.init_probs[:, self._start_index[window[0]]])
        for p in zip(window, window[1:]):
            k = self._pair_index.get(p)
            if k is not None:
                score += np.log(self.trans_probs[:, k])
        return score

    def select_chain(self, window, full_history: bool = True) -> tuple[int, TransitionMatrix]:
        c = int(np.argmax(self.component_scores(list(window), full_history)))
        return c, self.chains[c]

    def bind(self, dist: SegmentDistanceMatrix, net: RoadNetwork | None = None):
        _check_ref(self.network_ref, dist, net)
        return self

    def to_dict(self) -> dict:
        return {
            "network_ref": self.network_ref,
            "weights": self.weights.tolist(),
            "init_probs": self.init_probs.tolist(),
            "trans_probs": self.trans_probs.tolist(),
            "support": [list(p) for p in self.support],
            "starts": list(self.starts),
            "global_counts": None if self.global_counts is None else counts_to_dict(self.global_counts),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MMMModel":
        gc = doc.get("global_counts")
        return cls(
            np.array(doc["weights"]),
            np.array(doc["init_probs"]),
            np.array(doc["trans_probs"]),
            [tuple(p) for p in doc["support"]],
            list(doc["starts"]),
            doc["network_ref"],
            global_counts=None if gc is None else counts_from_dict(gc),
        )


def mmm_train(
    ds,
    components: int,
    seed: int = 0,
    max_iters: int = 200,
    tol: float = 1e-8,
    eps: float = MMM_EPS,
) -> MMMModel:
    """Fit a mixture of first-order chains by EM.

    The M-step adds ``eps`` to every weight, start and transition count,
    which is the MAP update under a Dirichlet(1 + eps) prior; ``objective_trace``
    holds that penalized log-likelihood (non-decreasing by construction) and
    ``loglik_trace`` the plain log-likelihood.
    """
    seqs = [s for s in _segments(ds) if s]
    N = len(seqs)
    if N == 0:
        raise DataError("MMM needs a nonempty dataset")
    if components < 1:
        raise DataError("components must be >= 1")
    if components > N:
        raise DataError(f"components={components} exceeds the {N} trajectories")
    data = _mixture_data(seqs)
    C = components
    n_src = len(data.sources)
    rng = np.random.default_rng(seed)
    R = _farthest_first_init(data.X, C, rng) if data.X.shape[1] else np.full((N, C), 1.0 / C)
    XT = data.X.T.tocsr()
    ST = data.S.T.tocsr()

    def m_step(R):
        w = (R.sum(axis=0) + eps) / (N + C * eps)
        start_c = np.asarray((ST @ R).T)
        init = (start_c + eps) / (start_c.sum(axis=1, keepdims=True) + eps * len(data.starts))
        pair_c = np.asarray((XT @ R).T)
        trans = _normalize_rows(pair_c, data.pair_source, n_src, eps) if pair_c.shape[1] else pair_c
        return w, init, trans

    def e_step(w, init, trans):
        log_joint = np.log(w)[None, :] + np.asarray(data.S @ np.log(init).T)
        if trans.shape[1]:
            log_joint = log_joint + np.asarray(data.X @ np.log(trans).T)
        ll = logsumexp(log_joint, axis=1)
        return np.exp(log_joint - ll[:, None]), float(ll.sum())

    def penalty(w, init, trans):
        return eps * (np.log(w).sum() + np.log(init).sum() + np.log(trans).sum())

    objective, loglik = [], []
    w, init, trans = m_step(R)
    for it in range(max_iters):
        R, ll = e_step(w, init, trans)
        loglik.append(ll)
        objective.append(ll + penalty(w, init, trans))
        if it > 0 and objective[-1] - objective[-2] < tol:
            break
        w, init, trans = m_step(R)
    logger.info("MMM: %d components, %d iterations, log-likelihood %.4f", C, len(loglik), loglik[-1])
    return MMMModel(
        w,
        init,
        trans,
        data.support,
        data.starts,
        getattr(ds, "network_ref", None),
        R,
        objective,
        loglik,
        build_counts(seqs),
    )


def mmm_cv(ds, candidates: Sequence[int], folds: int = 10, seed: int = 0, **kw) -> dict[int, float]:
    """Mean held-out log-likelihood per component count (k-fold)."""
    seqs = [s for s in _segments(ds) if s]
    order = np.random.default_rng(seed).permutation(len(seqs))
    parts = np.array_split(order, folds)
    scores = {}
    for C in candidates:
        total = 0.0
        for f in range(folds):
            held = set(parts[f].tolist())
            train = [seqs[i] for i in range(len(seqs)) if i not in held]
            m = mmm_train(train, C, seed=seed, **kw)
            total += sum(float(logsumexp(m.component_scores(list(seqs[i]), True))) for i in parts[f])
        scores[C] = total / len(seqs)
    return scores


# --- NETSCAN-style dense paths --------------------------------------------


def _overlap_run(traj: Sequence[int], path_set: frozenset[int]) -> int:
    best = run = 0
    for e in traj:
        run = run + 1 if e in path_set else 0
        best = max(best, run)
    return best


@dataclass
class NetscanModel:
    dense_paths: list[list[int]]
    assignment: dict[int, int]
    group_counts: list[TransitionCounts]
    global_counts: TransitionCounts
    density_threshold: float
    similarity_threshold: float
    network_ref: str | None = None

    method = "netscan"

    def __post_init__(self):
        self.path_sets = [frozenset(p) for p in self.dense_paths]
        self.chains = [to_probabilities(c) for c in self.group_counts]
        self.global_chain = to_probabilities(self.global_counts)
        self._dist: SegmentDistanceMatrix | None = None

    def bind(self, dist: SegmentDistanceMatrix, net: RoadNetwork | None = None):
        _check_ref(self.network_ref, dist, net)
        self._dist = dist
        return self

    def assign(self, traj: Sequence[int], dist: SegmentDistanceMatrix | None = None) -> int:
        """Path sharing the most segments, then the longest overlap run, then the lower id.

        Trajectories sharing nothing go to the nearest path by non-directional
        trajDTW; -1 when no distance matrix is available for that fallback.
        """
        traj = list(traj)
        tset = set(traj)
        keys = [(-len(tset & ps), -_overlap_run(traj, ps), pid) for pid, ps in enumerate(self.path_sets)]
        best = min(keys)
        if best[0] < 0:
            return best[2]
        dist = dist or self._dist
        if dist is None:
            return -1
        d = [nd_traj_dtw(traj, p, dist) for p in self.dense_paths]
        return int(np.argmin(d))

    def select_chain(self, window, full_history: bool = True) -> tuple[int, TransitionMatrix]:
        pid = self.assign(window)
        if pid < 0:
            return -1, self.global_chain
        return pid, self.chains[pid]

    def to_dict(self) -> dict:
        return {
            "network_ref": self.network_ref,
            "dense_paths": self.dense_paths,
            "assignment": sorted([t, p] for t, p in self.assignment.items()),
            "group_counts": [counts_to_dict(c) for c in self.group_counts],
            "global_counts": counts_to_dict(self.global_counts),
            "density_threshold": self.density_threshold,
            "similarity_threshold": self.similarity_threshold,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NetscanModel":
        return cls(
            [list(p) for p in doc["dense_paths"]],
            {int(t): int(p) for t, p in doc["assignment"]},
            [counts_from_dict(c) for c in doc["group_counts"]],
            counts_from_dict(doc["global_counts"]),
            float(doc["density_threshold"]),
            float(doc["similarity_threshold"]),
            doc["network_ref"],
        )


def dense_paths(
    density: dict[int, int],
    net: RoadNetwork,
    density_threshold: float,
    similarity_threshold: float,
    min_path: int = NETSCAN_MIN_PATH,
) -> list[list[int]]:
    """Greedy dense-path construction.

    Seeds at the densest unused segment, then grows the tail and afterwards
    the head through the free end node, always onto the densest unused
    neighbour that clears the density threshold and differs from the current
    end segment by at most ``similarity_threshold``. Every visited segment is
    consumed, including those of paths too short to keep.
    """
    used: set[int] = set()
    paths: list[list[int]] = []
    dens = lambda e: density.get(e, 0)  # noqa: E731

    def grow(path: list[int], end_node: int, nodes: set[int], at_tail: bool) -> None:
        while True:
            cur = path[-1] if at_tail else path[0]
            cands = []
            for e in net.node_edges[end_node]:
                if e in used or dens(e) < density_threshold:
                    continue
                if abs(dens(e) - dens(cur)) > similarity_threshold:
                    continue
                a, b = net.endpoints(e)
                other = b if a == end_node else a
                if other in nodes:
                    continue
                cands.append((-dens(e), e, other))
            if not cands:
                return
            _, e, other = min(cands)
            used.add(e)
            nodes.add(other)
            if at_tail:
                path.append(e)
            else:
                path.insert(0, e)
            end_node = other

    order = sorted((e for e in density if dens(e) >= density_threshold), key=lambda e: (-dens(e), e))
    for seed in order:
        if seed in used:
            continue
        used.add(seed)
        a, b = net.endpoints(seed)
        path = [seed]
        nodes = {a, b}
        grow(path, b, nodes, at_tail=True)
        grow(path, a, nodes, at_tail=False)
        if len(path) >= min_path:
            paths.append(path)
    return paths


def netscan_train(
    ds: TrajectoryDataset,
    net: RoadNetwork,
    density_threshold: float,
    similarity_threshold: float,
    dist: SegmentDistanceMatrix | None = None,
    min_path: int = NETSCAN_MIN_PATH,
) -> NetscanModel:
    if not density_threshold > 0 or not similarity_threshold > 0:
        raise DataError("NETSCAN thresholds must be positive")
    seqs = _segments(ds)
    if not seqs:
        raise DataError("NETSCAN needs a nonempty dataset")
    counts = build_counts(seqs)
    density = counts.pass_counts
    if not density or max(density.values()) < density_threshold:
        raise DataError(f"no segment reaches density threshold {density_threshold}")
    paths = dense_paths(density, net, density_threshold, similarity_threshold, min_path)
    if not paths:
        raise DataError(f"no dense path of at least {min_path} segments at these thresholds")
    model = NetscanModel(paths, {}, [], counts, density_threshold, similarity_threshold, net.ref)
    if dist is not None:
        model.bind(dist, net)
    ids = [t.id if hasattr(t, "id") else k for k, t in enumerate(ds)]
    groups: list[list[tuple[int, ...]]] = [[] for _ in paths]
    for tid, s in zip(ids, seqs):
        pid = model.assign(s)
        if pid < 0:
            raise DataError("a trajectory shares no segment with any dense path; pass a distance matrix")
        model.assignment[tid] = pid
        groups[pid].append(s)
    model.group_counts = [build_counts(g) for g in groups]
    model.chains = [to_probabilities(c) for c in model.group_counts]
    return model


def netscan_search(
    ds: TrajectoryDataset,
    net: RoadNetwork,
    target_paths: int,
    dist: SegmentDistanceMatrix | None = None,
    similarity_thresholds: Sequence[float] | None = None,
    min_path: int = NETSCAN_MIN_PATH,
) -> NetscanModel:
    """Threshold pair whose dense-path count is closest to ``target_paths``.

    Density thresholds range over the distinct observed densities; ties
    prefer the higher density threshold, then the tighter similarity threshold.
    """
    seqs = _segments(ds)
    density = build_counts(seqs).pass_counts
    levels = sorted(set(density.values()))
    if similarity_thresholds is None:
        similarity_thresholds = [float(max(levels))]
    best = None
    for sim in sorted(similarity_thresholds):
        for delta in levels:
            n_paths = len(dense_paths(density, net, delta, sim, min_path))
            if n_paths == 0:
                continue
            key = (abs(n_paths - target_paths), -delta, sim)
            if best is None or key < best[0]:
                best = (key, delta, sim)
    if best is None:
        raise DataError("no threshold setting yields a dense path")
    return netscan_train(ds, net, best[1], best[2], dist, min_path)

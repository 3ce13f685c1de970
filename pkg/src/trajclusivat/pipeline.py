"""Traj-clusiVAT training: sampling, two-stage VAT clustering, hybrid NPR, per-cluster chains."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .cluster_model import ClusterModel, NPRIndex, RepresentativeTrajectory, build_cluster
from .distance import DIRECTIONAL, NON_DIRECTIONAL, pairwise_matrix, traj_dtw
from .errors import DataError, NetworkMismatchError
from .markov import TransitionCounts, TransitionMatrix, build_counts, to_probabilities
from .persistence import counts_from_dict, counts_to_dict, read_envelope, write_envelope
from .road_network import RoadNetwork, SegmentDistanceMatrix
from .sampling import MMRSSample, mmrs
from .trajectories import DEFAULT_MAX_LEN, DEFAULT_MIN_LEN, Trajectory, TrajectoryDataset
from .vat import IvatMatrix, alpha_threshold, cut_alpha, cut_k, ivat, vat

logger = logging.getLogger(__name__)

METHOD = "traj-clusivat"


@dataclass(frozen=True)
class PipelineConfig:
    k_prime: int = 150
    n: int = 500
    alpha_stage1: float = 0.05
    alpha_stage2: float | None = None
    min_t: float = 0.3
    seed: int = 0
    min_len: int = DEFAULT_MIN_LEN
    max_len: int = DEFAULT_MAX_LEN
    lambda_window: int | None = 3
    k_stage1: int | None = None

    def __post_init__(self):
        if self.alpha_stage2 is None:
            object.__setattr__(self, "alpha_stage2", self.alpha_stage1)
        if self.n < self.k_prime:
            raise DataError(f"n={self.n} must be at least k_prime={self.k_prime}")
        if not 0 < self.min_t <= 1:
            raise DataError("min_t must lie in (0, 1]")
        if self.alpha_stage1 <= 0 or self.alpha_stage2 <= 0:
            raise DataError("cut thresholds must be positive")
        if self.lambda_window is not None and self.lambda_window < 1:
            raise DataError("lambda_window must be >= 1 (or null for the full history)")

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingDiagnostics:
    sample: MMRSSample | None = None
    stage1_labels: np.ndarray | None = None
    stage1_threshold: float = 0.0
    ivat_image: IvatMatrix | None = None
    sample_clusters: list[list[int]] = field(default_factory=list)
    npr_probability_hits: int = 0
    npr_distance_fallbacks: int = 0


@dataclass
class TrainedModel:
    clusters: list[ClusterModel]
    k_nondirectional: int
    global_counts: TransitionCounts
    config: PipelineConfig
    network_ref: str | None
    diagnostics: TrainingDiagnostics | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.global_chain: TransitionMatrix = to_probabilities(self.global_counts)
        self._dist: SegmentDistanceMatrix | None = None
        self._index: NPRIndex | None = None
        self._by_id = {c.cluster_id: c for c in self.clusters}

    method = METHOD

    @property
    def K(self) -> int:
        return len(self.clusters)

    def labels(self) -> dict[int, int]:
        """Trajectory id -> cluster id."""
        return {tid: c.cluster_id for c in self.clusters for tid in c.members}

    def bind(self, dist: SegmentDistanceMatrix, net: RoadNetwork | None = None) -> "TrainedModel":
        """Attach the segment distance matrix needed for RT distances at prediction time."""
        ref = net.ref if net is not None else dist.network_ref
        if ref is not None and self.network_ref is not None and ref != self.network_ref:
            raise NetworkMismatchError(
                f"model was trained on network {self.network_ref}, got network {ref}"
            )
        self._dist = dist
        self._index = NPRIndex(self.clusters, dist)
        return self

    @property
    def npr_index(self) -> NPRIndex:
        if self._index is None:
            raise DataError("model is not bound to a segment distance matrix; call bind() first")
        return self._index

    @property
    def n_edges(self) -> int | None:
        return None if self._dist is None else self._dist.size

    def select_chain(self, window: Sequence[int], full_history: bool = True) -> tuple[int, TransitionMatrix]:
        cid = self.npr_index.assign(window)
        return cid, self._by_id[cid].probs

    def predict(self, partial: Sequence[int], steps: int, lambda_window: int | None | str = "config"):
        from .predictor import PredictionRequest, predict

        lam = self.config.lambda_window if lambda_window == "config" else lambda_window
        return predict(self, PredictionRequest(tuple(partial), steps, lam))

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "network_ref": self.network_ref,
            "k": self.k_nondirectional,
            "K": self.K,
            "clusters": [
                {
                    "id": c.cluster_id,
                    "members": list(c.members),
                    "counts": counts_to_dict(c.counts),
                    "frs": sorted(c.frs),
                    "fss": sorted(c.fss),
                    "rt": list(c.rt.segments),
                    "rt_score": c.rt.count_score,
                    "rt_origin": c.rt.origin_fss,
                }
                for c in self.clusters
            ],
            "global_counts": counts_to_dict(self.global_counts),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedModel":
        clusters = []
        for c in doc["clusters"]:
            counts = counts_from_dict(c["counts"])
            clusters.append(
                ClusterModel(
                    int(c["id"]),
                    [int(m) for m in c["members"]],
                    counts,
                    to_probabilities(counts),
                    frozenset(c["frs"]),
                    frozenset(c["fss"]),
                    RepresentativeTrajectory(tuple(c["rt"]), int(c["rt_score"]), int(c["rt_origin"])),
                )
            )
        return cls(
            clusters,
            int(doc["k"]),
            counts_from_dict(doc["global_counts"]),
            PipelineConfig.from_dict(doc["config"]),
            doc["network_ref"],
        )


def save_model(model, path) -> None:
    write_envelope(path, model.method, model.to_dict())


def load_model(path) -> TrainedModel:
    doc = read_envelope(path)
    if doc["method"] != METHOD:
        raise DataError(f"{path} holds a {doc['method']!r} model, not {METHOD!r}")
    return TrainedModel.from_dict(doc)


def _split_directional(
    members: list[int],
    trajs: Sequence[Trajectory],
    dist: SegmentDistanceMatrix,
    alpha: float,
    stage1_threshold: float,
    threads: int,
) -> list[list[int]]:
    """Split one non-directional sample cluster by directional trajDTW."""
    if len(members) == 1:
        return [members]
    if len(members) == 2:
        # a 2-object MST is always cut for alpha < 1; compare against the stage-1 scale instead
        d = traj_dtw(trajs[members[0]].segments, trajs[members[1]].segments, dist)
        return [[members[0]], [members[1]]] if d > stage1_threshold else [members]
    dm = pairwise_matrix([trajs[i].segments for i in members], dist, DIRECTIONAL, threads)
    labels = cut_alpha(vat(dm), alpha)
    return [[members[i] for i in np.flatnonzero(labels == lab)] for lab in range(int(labels.max()) + 1)]


def train(
    ds: TrajectoryDataset,
    net: RoadNetwork | None,
    dist: SegmentDistanceMatrix,
    cfg: PipelineConfig,
    threads: int = 1,
) -> TrainedModel:
    """Run the seven training steps and return the trained, distance-bound model."""
    trajs = list(ds.trajectories)
    n_total = len(trajs)
    if n_total < cfg.n:
        raise DataError(f"[sampling] dataset has {n_total} trajectories, fewer than n={cfg.n}")
    if cfg.n < 2:
        raise DataError("[sampling] sample must hold at least 2 trajectories")
    if net is not None and ds.network_ref is not None and ds.network_ref != net.ref:
        raise NetworkMismatchError("trajectory dataset was ingested against a different network")
    diag = TrainingDiagnostics()

    # (i) MMRS with non-directional trajDTW
    sample = mmrs([t.segments for t in trajs], cfg.k_prime, cfg.n, dist, cfg.seed, threads)
    diag.sample = sample
    sample_idx = list(sample.sample)
    logger.info("MMRS: %d distinguished, %d sampled of %d", len(sample.distinguished), len(sample_idx), n_total)

    # (ii) iVAT + cut on the non-directional sample matrix
    dn = pairwise_matrix([trajs[i].segments for i in sample_idx], dist, NON_DIRECTIONAL, threads)
    v1 = vat(dn)
    diag.ivat_image = ivat(v1)
    if cfg.k_stage1 is not None:
        labels1 = cut_k(v1, cfg.k_stage1)
    else:
        labels1 = cut_alpha(v1, cfg.alpha_stage1)
    diag.stage1_labels = labels1
    diag.stage1_threshold = alpha_threshold(v1, cfg.alpha_stage1)
    k = int(labels1.max()) + 1

    # (iii) directional split of each non-directional cluster
    groups: list[list[int]] = []
    for lab in range(k):
        members = [sample_idx[i] for i in np.flatnonzero(labels1 == lab)]
        groups.extend(_split_directional(members, trajs, dist, cfg.alpha_stage2, diag.stage1_threshold, threads))
    diag.sample_clusters = [[trajs[i].id for i in g] for g in groups]
    logger.info("clustering: k=%d non-directional, K=%d directional", k, len(groups))

    # (iv) sample-level cluster statistics and RTs
    sample_models = [build_cluster(cid, [trajs[i] for i in g], cfg.min_t) for cid, g in enumerate(groups)]

    # (v) hybrid NPR for the non-sampled trajectories, in id order
    assignment = {}
    for cid, g in enumerate(groups):
        for i in g:
            assignment[i] = cid
    index = NPRIndex(sample_models, dist)
    in_sample = set(sample_idx)
    rest = sorted((i for i in range(n_total) if i not in in_sample), key=lambda i: trajs[i].id)
    for i in rest:
        probs = index.path_probabilities(trajs[i].segments)
        if max(probs) > 0:
            diag.npr_probability_hits += 1
        else:
            diag.npr_distance_fallbacks += 1
        assignment[i] = index.assign(trajs[i].segments)

    # (vi)+(vii) rebuild every cluster and the global chain from full membership
    members_of: list[list[Trajectory]] = [[] for _ in groups]
    for i in range(n_total):
        members_of[assignment[i]].append(trajs[i])
    clusters = [build_cluster(cid, members, cfg.min_t) for cid, members in enumerate(members_of) if members]
    clusters = [
        ClusterModel(new_id, c.members, c.counts, c.probs, c.frs, c.fss, c.rt) for new_id, c in enumerate(clusters)
    ]
    global_counts = build_counts(t.segments for t in trajs)
    model = TrainedModel(clusters, k, global_counts, cfg, net.ref if net is not None else dist.network_ref, diag)
    return model.bind(dist, net)

"""Undirected road network, haversine geometry and the segment-to-segment distance matrix."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import DisconnectedNetworkError, ModelFormatError, NetworkError

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0

_DALL_MAGIC = b"TCVD"
_DALL_VERSION = 1


def haversine(p: tuple[float, float], q: tuple[float, float]) -> float:
    """Great-circle distance in km between two (lat, lon) points given in degrees."""
    lat1, lon1 = math.radians(p[0]), math.radians(p[1])
    lat2, lon2 = math.radians(q[0]), math.radians(q[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def geodesic_midpoint(p: tuple[float, float], q: tuple[float, float]) -> tuple[float, float]:
    lat1, lon1 = math.radians(p[0]), math.radians(p[1])
    lat2, lon2 = math.radians(q[0]), math.radians(q[1])
    bx = math.cos(lat2) * math.cos(lon2 - lon1)
    by = math.cos(lat2) * math.sin(lon2 - lon1)
    lat = math.atan2(math.sin(lat1) + math.sin(lat2), math.hypot(math.cos(lat1) + bx, by))
    lon = lon1 + math.atan2(by, math.cos(lat1) + bx)
    return math.degrees(lat), math.degrees(lon)


@dataclass(frozen=True)
class RoadNetwork:
    """Immutable undirected road graph.

    Node and edge ids are dense (``0..|V|-1`` and ``0..|E|-1``), so ids double
    as array indices.
    """

    lat: np.ndarray
    lon: np.ndarray
    edge_a: np.ndarray
    edge_b: np.ndarray
    length: np.ndarray
    node_edges: tuple[frozenset[int], ...] = field(repr=False)
    edge_neighbors: tuple[frozenset[int], ...] = field(repr=False)
    ref: str = ""

    @classmethod
    def build(cls, nodes, edges) -> "RoadNetwork":
        """Validate and assemble a network.

        ``nodes`` is a sequence of ``(id, lat, lon)``; ``edges`` a sequence of
        ``(id, a, b, length_km or None)``. Missing lengths are filled with the
        haversine distance between the endpoints.
        """
        if not edges:
            raise NetworkError("network has no segments")
        nodes = sorted(nodes, key=lambda n: n[0])
        if [n[0] for n in nodes] != list(range(len(nodes))):
            raise NetworkError("node ids must be dense integers 0..|V|-1")
        edges = sorted(edges, key=lambda e: e[0])
        if [e[0] for e in edges] != list(range(len(edges))):
            raise NetworkError("edge ids must be dense integers 0..|E|-1")

        lat = np.array([float(n[1]) for n in nodes])
        lon = np.array([float(n[2]) for n in nodes])
        if np.any(np.abs(lat) > 90):
            raise NetworkError("latitude outside [-90, 90]")
        n_nodes = len(nodes)

        edge_a = np.empty(len(edges), dtype=np.int64)
        edge_b = np.empty(len(edges), dtype=np.int64)
        length = np.empty(len(edges))
        for eid, a, b, ln in edges:
            for end in (a, b):
                if not (isinstance(end, (int, np.integer)) and 0 <= end < n_nodes):
                    raise NetworkError(f"edge {eid} references unknown node {end}")
            edge_a[eid], edge_b[eid] = a, b
            if ln is None:
                ln = haversine((lat[a], lon[a]), (lat[b], lon[b]))
            ln = float(ln)
            if not ln > 0:
                raise NetworkError(f"edge {eid} has non-positive length {ln}")
            length[eid] = ln

        incident: list[set[int]] = [set() for _ in range(n_nodes)]
        for eid in range(len(edges)):
            incident[edge_a[eid]].add(eid)
            incident[edge_b[eid]].add(eid)
        node_edges = tuple(frozenset(s) for s in incident)
        edge_neighbors = tuple(
            frozenset((node_edges[edge_a[e]] | node_edges[edge_b[e]]) - {e}) for e in range(len(edges))
        )
        for arr in (lat, lon, edge_a, edge_b, length):
            arr.setflags(write=False)

        net = cls(lat, lon, edge_a, edge_b, length, node_edges, edge_neighbors)
        object.__setattr__(net, "ref", net._fingerprint())
        if not net.is_connected():
            logger.warning("road network %s is disconnected; distance precomputation will fail", net.ref)
        return net

    @property
    def n_nodes(self) -> int:
        return len(self.lat)

    @property
    def n_edges(self) -> int:
        return len(self.length)

    def endpoints(self, e: int) -> tuple[int, int]:
        return int(self.edge_a[e]), int(self.edge_b[e])

    def adjacent_segments(self, e: int) -> frozenset[int]:
        """Edges sharing a node with ``e``, excluding ``e`` itself."""
        if not 0 <= e < self.n_edges:
            raise NetworkError(f"unknown edge id {e}")
        return self.edge_neighbors[e]

    def shared_nodes(self, e1: int, e2: int) -> set[int]:
        return set(self.endpoints(e1)) & set(self.endpoints(e2))

    def midpoint(self, e: int) -> tuple[float, float]:
        a, b = self.endpoints(e)
        return geodesic_midpoint((self.lat[a], self.lon[a]), (self.lat[b], self.lon[b]))

    def midpoints(self) -> list[tuple[float, float]]:
        mids = self.__dict__.get("_mid_cache")
        if mids is None:
            mids = [self.midpoint(e) for e in range(self.n_edges)]
            self.__dict__["_mid_cache"] = mids
        return mids

    def is_connected(self) -> bool:
        n_comp, _ = connected_components(self._node_graph(), directed=False)
        return n_comp == 1

    def _node_graph(self) -> csr_matrix:
        # parallel edges: keep the shortest, csr construction would otherwise sum them
        best: dict[tuple[int, int], float] = {}
        for e in range(self.n_edges):
            a, b = self.endpoints(e)
            if a == b:
                continue
            key = (min(a, b), max(a, b))
            if key not in best or self.length[e] < best[key]:
                best[key] = float(self.length[e])
        rows = [k[0] for k in best] + [k[1] for k in best]
        cols = [k[1] for k in best] + [k[0] for k in best]
        vals = list(best.values()) * 2
        return csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes))

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": i, "lat": float(self.lat[i]), "lon": float(self.lon[i])} for i in range(self.n_nodes)],
            "edges": [
                {"id": e, "a": int(self.edge_a[e]), "b": int(self.edge_b[e]), "length_km": float(self.length[e])}
                for e in range(self.n_edges)
            ],
        }

    def _fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def network_from_dict(doc: dict) -> RoadNetwork:
    try:
        nodes = [(int(n["id"]), n["lat"], n["lon"]) for n in doc["nodes"]]
        edges = [(int(e["id"]), int(e["a"]), int(e["b"]), e.get("length_km")) for e in doc["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkError(f"malformed network document: {exc!r}") from exc
    return RoadNetwork.build(nodes, edges)


def load_network(path) -> RoadNetwork:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise NetworkError(f"cannot read network file {path}: {exc}") from exc
    return network_from_dict(doc)


def save_network(net: RoadNetwork, path) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=1) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SegmentDistanceMatrix:
    """Dense |E| x |E| matrix of network distances (km) between segment midpoints."""

    values: np.ndarray
    network_ref: str | None = None

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, idx):
        return self.values[idx]

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_DALL_MAGIC + struct.pack("<II", _DALL_VERSION, self.size))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, network_ref: str | None = None) -> "SegmentDistanceMatrix":
        raw = Path(path).read_bytes()
        if raw[:4] != _DALL_MAGIC:
            raise ModelFormatError(f"{path}: bad magic {raw[:4]!r}")
        version, n = struct.unpack("<II", raw[4:12])
        if version != _DALL_VERSION:
            raise ModelFormatError(f"{path}: unsupported version {version}")
        body = raw[12:]
        if len(body) != 8 * n * n:
            raise ModelFormatError(f"{path}: expected {n}x{n} matrix, got {len(body)} bytes")
        values = np.frombuffer(body, dtype="<f8").reshape(n, n).astype(np.float64)
        values.setflags(write=False)
        return cls(values, network_ref)


def node_distances(net: RoadNetwork) -> np.ndarray:
    """All-pairs shortest path lengths between nodes (Dijkstra from every node)."""
    return dijkstra(net._node_graph(), directed=False)


def all_pairs_segment_distances(net: RoadNetwork) -> SegmentDistanceMatrix:
    """Midpoint-to-midpoint network distance for every pair of segments.

    Entry (i, j) is the shortest node path between any endpoint of i and any
    endpoint of j plus half of each segment's length; the diagonal is zero.
    """
    sp = node_distances(net)
    if not np.all(np.isfinite(sp)):
        a, b = np.argwhere(~np.isfinite(sp))[0]
        raise DisconnectedNetworkError(int(a), int(b))
    a, b = net.edge_a, net.edge_b
    best = np.minimum(
        np.minimum(sp[np.ix_(a, a)], sp[np.ix_(a, b)]),
        np.minimum(sp[np.ix_(b, a)], sp[np.ix_(b, b)]),
    )
    half = net.length / 2.0
    values = best + half[:, None] + half[None, :]
    np.fill_diagonal(values, 0.0)
    # exact symmetry regardless of summation order
    values = np.minimum(values, values.T)
    values.setflags(write=False)
    return SegmentDistanceMatrix(values, net.ref)


def toy4_path() -> Path:
    """Path of the bundled 4-node, 3-segment collinear test network."""
    return Path(__file__).with_name("data") / "toy4.json"


def load_toy4() -> RoadNetwork:
    return load_network(toy4_path())

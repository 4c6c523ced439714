"""
Radius graphs with cached edge vectors and distances.

Edges are stored receiver-major: ``receivers`` is non-decreasing and, within one receiver, senders
are increasing. Edge vectors point from receiver to sender (x_j - x_i).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.core.errors import ContractViolation
from src.core.logging import log_degeneracy
from src.geometry.point_cloud import PointCloud


@dataclass(frozen=True)
class Graph:
    receivers: np.ndarray
    senders: np.ndarray
    vectors: np.ndarray
    distances: np.ndarray
    cutoff: float
    num_receivers: int
    num_senders: int

    @property
    def num_edges(self) -> int:
        return int(self.receivers.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def indptr(self) -> np.ndarray:
        counts = np.bincount(self.receivers, minlength=self.num_receivers)
        return np.concatenate([[0], np.cumsum(counts)])

    def degree(self) -> np.ndarray:
        return np.bincount(self.receivers, minlength=self.num_receivers)

    def neighbors(self, node: int) -> np.ndarray:
        if not 0 <= node < self.num_receivers:
            raise ContractViolation(f"node {node} outside [0, {self.num_receivers})")
        ptr = self.indptr
        return self.senders[ptr[node]:ptr[node + 1]]

    def edge_slice(self, node: int) -> slice:
        ptr = self.indptr
        return slice(int(ptr[node]), int(ptr[node + 1]))


def radius_neighbors(
    centers: np.ndarray,
    sources: np.ndarray,
    r_c: float,
    center_ids: Optional[np.ndarray] = None,
) -> Graph:
    """All (center, source) pairs closer than ``r_c``; brute-force O(M S) scan.

    ``center_ids`` gives each center's index among ``sources`` so the pair with itself is skipped.
    Coincident distinct points (distance 0) are dropped and logged.
    """
    if not r_c > 0:
        raise ContractViolation(f"cutoff radius must be positive, got {r_c}")
    centers = np.asarray(centers, dtype=np.float64)
    sources = np.asarray(sources, dtype=np.float64)
    diff = sources[None, :, :] - centers[:, None, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    mask = dist < r_c
    if center_ids is not None:
        mask[np.arange(len(centers)), np.asarray(center_ids, dtype=np.int64)] = False
    coincident = mask & (dist == 0.0)
    if coincident.any():
        log_degeneracy("coincident points dropped from radius graph", int(coincident.sum()))
        mask &= ~coincident
    receivers, senders = np.nonzero(mask)
    return Graph(
        receivers=receivers.astype(np.int64),
        senders=senders.astype(np.int64),
        vectors=diff[receivers, senders],
        distances=dist[receivers, senders],
        cutoff=float(r_c),
        num_receivers=len(centers),
        num_senders=len(sources),
    )


def radius_graph(cloud: PointCloud, r_c: float) -> Graph:
    positions = cloud.positions if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    return radius_neighbors(positions, positions, r_c, center_ids=np.arange(len(positions)))


def star_graph(positions: np.ndarray, hub: int, cutoff: float = np.inf) -> Graph:
    """Edges from every other node into ``hub``; used for the global pooling step.

    Nodes sitting exactly on the hub are dropped and logged, as in ``radius_neighbors``.
    """
    positions = np.asarray(positions, dtype=np.float64)
    senders = np.array([j for j in range(len(positions)) if j != hub], dtype=np.int64)
    vectors = positions[senders] - positions[hub]
    distances = np.linalg.norm(vectors, axis=1)
    coincident = distances == 0.0
    if coincident.any():
        log_degeneracy("coincident points dropped from star graph", int(coincident.sum()))
        senders, vectors, distances = senders[~coincident], vectors[~coincident], distances[~coincident]
    return Graph(
        receivers=np.zeros(len(senders), dtype=np.int64),
        senders=senders,
        vectors=vectors,
        distances=distances,
        cutoff=float(cutoff),
        num_receivers=1,
        num_senders=len(positions),
    )

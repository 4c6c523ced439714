"""
Edge embeddings and envelope-weighted neighbourhood statistics.
"""
from typing import Callable

import numpy as np

from src.core.errors import ContractViolation
from src.geometry.graph import Graph

WeightFn = Callable[[np.ndarray], np.ndarray]


def gaussian_radial_embedding(r, k: int, r_max: float) -> np.ndarray:
    """k Gaussians with means spaced evenly over [0, r_max] (both ends included).

    The width makes adjacent curves cross at 0.5. ``r`` may be a scalar or an array; the embedding
    is added as a trailing axis.
    """
    if k < 2:
        raise ContractViolation(f"radial embedding needs k >= 2, got {k}")
    if not r_max > 0:
        raise ContractViolation(f"r_max must be positive, got {r_max}")
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ContractViolation("distances must be non-negative")
    spacing = r_max / (k - 1)
    sigma = spacing / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    means = np.linspace(0.0, r_max, k)
    return np.exp(-((r[..., None] - means) ** 2) / (2.0 * sigma ** 2))


def unit_edge_directions(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise normalisation; zero rows stay zero and are flagged."""
    vectors = np.asarray(vectors, dtype=np.float64)
    lengths = np.linalg.norm(vectors, axis=-1, keepdims=True)
    degenerate = lengths[..., 0] == 0.0
    safe = np.where(degenerate[..., None], 1.0, lengths)
    return np.where(degenerate[..., None], 0.0, vectors / safe), degenerate


def unit_edge_direction(vector) -> tuple[np.ndarray, bool]:
    unit, flag = unit_edge_directions(np.asarray(vector, dtype=np.float64)[None, :])
    return unit[0], bool(flag[0])


def local_centers_of_mass(graph: Graph, envelope: WeightFn) -> np.ndarray:
    """Envelope-weighted sum of x_j - x_i over each receiver's neighbours."""
    weighted = envelope(graph.distances)[:, None] * graph.vectors
    out = np.zeros((graph.num_receivers, graph.dim))
    np.add.at(out, graph.receivers, weighted)
    return out


def local_center_of_mass(graph: Graph, node: int, envelope: WeightFn) -> np.ndarray:
    edges = graph.edge_slice(node)
    weights = np.asarray(envelope(graph.distances[edges]), dtype=np.float64)
    if not weights.size:
        return np.zeros(graph.dim)
    return np.sum(weights[:, None] * graph.vectors[edges], axis=0)

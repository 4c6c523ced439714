"""
Per-node local frames.

A frame is an orthogonal 3 x 3 matrix whose rows are the local basis vectors; it maps global
coordinates to local ones. Learned and PCA frames are equivariant: transforming the cloud by
x -> Q x + t turns every frame R_i into R_i Q^T.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from src.core.config import settings
from src.core.errors import ContractViolation
from src.frames.envelope import envelope, envelope_fn
from src.frames.gram_schmidt import assemble_frames, orthonormal_pairs, seeded_directions
from src.geometry.embeddings import gaussian_radial_embedding, local_centers_of_mass
from src.geometry.graph import Graph
from src.geometry.point_cloud import PointCloud
from src.netcore import tape as T
from src.netcore.layers import Mlp, Module
from src.netcore.tape import Value
from src.reps.representation import Group, is_orthogonal, random_orthogonal

FRAME_TOL = 1e-10


class FrameProvenance(str, Enum):
    LEARNED = "learned"
    PCA = "pca"
    RANDOM = "random"
    CONSTANT = "constant"
    IDENTITY = "identity"


@dataclass(frozen=True)
class FrameSet:
    frames: np.ndarray
    provenance: FrameProvenance

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[1] != frames.shape[2]:
            raise ContractViolation(f"frames must have shape (N, d, d), got {frames.shape}")
        if frames.shape[0] and not is_orthogonal(frames, FRAME_TOL):
            raise ContractViolation("frame set contains a non-orthogonal matrix")
        object.__setattr__(self, "frames", frames)

    @property
    def num_nodes(self) -> int:
        return self.frames.shape[0]

    def determinants(self) -> np.ndarray:
        return np.linalg.det(self.frames)

    def to_json(self) -> list[list[float]]:
        """Row-major 3 x 3 per node."""
        return self.frames.reshape(self.num_nodes, -1).tolist()


class FrameNet(Module):
    """The two-output network predicting per-edge weights of the frame vectors.

    Inputs per edge: even scalars of the receiver, even scalars of the sender and a Gaussian
    embedding of the edge length.
    """

    def __init__(
        self,
        scalar_width: int,
        radius: float,
        rng: np.random.Generator,
        hidden: Sequence[int] = (32, 32),
        radial_k: int = settings.RADIAL_K,
        envelope_p: int = settings.ENVELOPE_P,
    ):
        self.scalar_width = scalar_width
        self.radius = radius
        self.radial_k = radial_k
        self.envelope_p = envelope_p
        self.mlp = Mlp([2 * scalar_width + radial_k, *hidden, 2], rng)

    def edge_weights(self, graph: Graph, scalars: np.ndarray) -> Value:
        scalars = np.asarray(scalars, dtype=np.float64).reshape(graph.num_receivers, self.scalar_width)
        inputs = np.concatenate(
            [
                scalars[graph.receivers],
                scalars[graph.senders],
                gaussian_radial_embedding(graph.distances, self.radial_k, self.radius),
            ],
            axis=1,
        )
        return self.mlp(inputs)


def frame_vectors(graph: Graph, phi: FrameNet, scalars: np.ndarray) -> tuple[Value, Value]:
    """v_k = sum_j w(|x_i - x_j|) phi_k (x_i - x_j) / |x_i - x_j| for every node, k = 1, 2."""
    weights = phi.edge_weights(graph, scalars) * envelope(graph.distances, phi.radius, phi.envelope_p)[:, None]
    inward = -graph.vectors / graph.distances[:, None]
    v1 = T.segment_sum(weights[:, 0:1] * inward, graph.receivers, graph.num_receivers)
    v2 = T.segment_sum(weights[:, 1:2] * inward, graph.receivers, graph.num_receivers)
    return v1, v2


def learned_frame_vectors(graph: Graph, node: int, phi: FrameNet, scalars: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v1, v2 = frame_vectors(graph, phi, scalars)
    return v1.data[node], v2.data[node]


def learned_frames(graph: Graph, phi: FrameNet, scalars: np.ndarray, seed: int) -> Value:
    """Tape-aware learned frames (N, 3, 3)."""
    if graph.dim != 3:
        raise ContractViolation("learned frames are defined for d = 3")
    v1, v2 = frame_vectors(graph, phi, scalars)
    n1, n2 = orthonormal_pairs(v1, v2, seeded_directions(seed), context="learned frames")
    r_bar = local_centers_of_mass(graph, envelope_fn(phi.radius, phi.envelope_p))
    return assemble_frames(n1, n2, r_bar)


def build_learned_frames(
    cloud: PointCloud, graph: Graph, phi: FrameNet, scalars: Optional[np.ndarray] = None, seed: int = settings.DEFAULT_SEED
) -> FrameSet:
    if scalars is None:
        scalars = np.zeros((cloud.num_nodes, phi.scalar_width))
    return FrameSet(frames=learned_frames(graph, phi, scalars, seed).data, provenance=FrameProvenance.LEARNED)


def _first_nonzero_sign(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    significant = np.abs(vectors) > tol
    first = np.argmax(significant, axis=-1)
    values = np.take_along_axis(vectors, first[..., None], axis=-1)[..., 0]
    return np.where(values < 0, -1.0, 1.0)


def build_pca_frames(cloud: PointCloud, graph: Graph) -> FrameSet:
    """Rows are eigenvectors of the local covariance, by descending eigenvalue.

    Each row points away from the neighbours on average (along the sum of x_i - x_j); a zero
    projection falls back to a positive first non-zero component.
    """
    rel = -graph.vectors
    n = cloud.num_nodes
    cov = np.zeros((n, graph.dim, graph.dim))
    np.add.at(cov, graph.receivers, rel[:, :, None] * rel[:, None, :])
    _, vecs = np.linalg.eigh(cov)
    rows = np.swapaxes(vecs[:, :, ::-1], 1, 2)
    sums = np.zeros((n, graph.dim))
    np.add.at(sums, graph.receivers, rel)
    projection = np.einsum("nkd,nd->nk", rows, sums)
    tol = 1e-12 * (1.0 + np.linalg.norm(sums, axis=1, keepdims=True))
    sign = np.where(projection > tol, 1.0, np.where(projection < -tol, -1.0, _first_nonzero_sign(rows)))
    return FrameSet(frames=rows * sign[:, :, None], provenance=FrameProvenance.PCA)


def build_random_frames(n: int, rng: np.random.Generator, group: Group = "O(d)", d: int = 3) -> FrameSet:
    return FrameSet(
        frames=np.stack([random_orthogonal(rng, group, d) for _ in range(n)]) if n else np.zeros((0, d, d)),
        provenance=FrameProvenance.RANDOM,
    )


def build_constant_frames(n: int, R: np.ndarray) -> FrameSet:
    R = np.asarray(R, dtype=np.float64)
    provenance = FrameProvenance.IDENTITY if np.array_equal(R, np.eye(R.shape[0])) else FrameProvenance.CONSTANT
    return FrameSet(frames=np.broadcast_to(R, (n,) + R.shape).copy(), provenance=provenance)

"""
Gram-Schmidt completion of two predicted vectors into an orthonormal frame.

The batched functions work on tape values so gradients reach the frame network. Degenerate rows
(a vanishing first vector, or a second vector parallel to the first) take a seeded random
direction instead; the substitution is selected with a constant mask, so no NaN enters the tape.
"""
from typing import Callable, Optional

import numpy as np

from src.core.config import settings
from src.core.errors import ContractViolation
from src.core.logging import log_degeneracy
from src.netcore import tape as T
from src.netcore.tape import Value
from src.utils.rng import node_unit_vectors

# Supplies unit directions for the given node indices.
DirectionSource = Callable[[np.ndarray, int], np.ndarray]

LEVI_CIVITA = np.zeros((3, 3, 3))
LEVI_CIVITA[0, 1, 2] = LEVI_CIVITA[1, 2, 0] = LEVI_CIVITA[2, 0, 1] = 1.0
LEVI_CIVITA[0, 2, 1] = LEVI_CIVITA[2, 1, 0] = LEVI_CIVITA[1, 0, 2] = -1.0


def seeded_directions(seed: int) -> DirectionSource:
    return lambda nodes, salt: node_unit_vectors(seed, nodes, salt)


def generator_directions(rng: np.random.Generator) -> DirectionSource:
    def draw(nodes: np.ndarray, salt: int) -> np.ndarray:
        v = rng.standard_normal((len(nodes), 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True)
    return draw


def _row_norms(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x, axis=-1)


def orthonormal_pairs(
    v1: T.ValueLike,
    v2: T.ValueLike,
    directions: DirectionSource,
    eps: float = settings.PARALLEL_EPS,
    context: str = "",
) -> tuple[Value, Value]:
    """Row-wise n1 = v1/|v1| and n2 = normalised rejection of v2 from n1, for (N, 3) inputs."""
    v1, v2 = T.as_value(v1), T.as_value(v2)
    scale = np.maximum(np.maximum(_row_norms(v1.data), _row_norms(v2.data)), 1.0)
    threshold = eps * scale

    weak = _row_norms(v1.data) < threshold
    if weak.any():
        nodes = np.nonzero(weak)[0]
        log_degeneracy("vanishing first frame vector", len(nodes), context)
        fill = np.zeros(v1.shape)
        fill[nodes] = directions(nodes, 1)
        v1 = T.where(weak[:, None], fill, v1)
    n1 = v1 * T.reciprocal(T.norm(v1, axis=-1, keepdims=True))

    rejection = v2 - T.vsum(n1 * v2, axis=-1, keepdims=True) * n1
    parallel = _row_norms(rejection.data) < threshold
    salt = 2
    if parallel.any():
        log_degeneracy("parallel frame vectors", int(parallel.sum()), context)
    while parallel.any():
        nodes = np.nonzero(parallel)[0]
        fill = np.zeros(v2.shape)
        fill[nodes] = directions(nodes, salt)
        v2 = T.where(parallel[:, None], fill, v2)
        rejection = v2 - T.vsum(n1 * v2, axis=-1, keepdims=True) * n1
        # relative to the replaced rows: a unit fallback never clears a threshold scaled by |v1|
        parallel = _row_norms(rejection.data) < eps * np.maximum(_row_norms(v2.data), 1.0)
        salt += 1
    n2 = rejection * T.reciprocal(T.norm(rejection, axis=-1, keepdims=True))
    return n1, n2


def cross(a: T.ValueLike, b: T.ValueLike) -> Value:
    return T.einsum("ijk,nj,nk->ni", LEVI_CIVITA, a, b)


def assemble_frames(n1: T.ValueLike, n2: T.ValueLike, r_bar: Optional[np.ndarray]) -> Value:
    """Stack rows (n1, n2, n3) with n3 = +-(n1 x n2), the sign chosen so that n3 . r_bar >= 0.

    ``r_bar=None`` keeps +n1 x n2 everywhere (rotations only). The sign is piecewise constant and
    carries no gradient.
    """
    n3 = cross(n1, n2)
    if r_bar is not None:
        sign = np.where(np.sum(n3.data * np.asarray(r_bar), axis=-1) >= 0.0, 1.0, -1.0)
        n3 = n3 * sign[:, None]
    return T.stack([T.as_value(n1), T.as_value(n2), n3], axis=1)


def gram_schmidt_pair(v1, v2, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n1, n2 = orthonormal_pairs(
        np.asarray(v1, dtype=np.float64)[None, :], np.asarray(v2, dtype=np.float64)[None, :],
        generator_directions(rng),
    )
    return n1.data[0], n2.data[0]


def complete_frame(n1, n2, r_bar, tol: float = 1e-9) -> np.ndarray:
    n1, n2 = np.asarray(n1, dtype=np.float64), np.asarray(n2, dtype=np.float64)
    if abs(np.linalg.norm(n1) - 1) > tol or abs(np.linalg.norm(n2) - 1) > tol or abs(n1 @ n2) > tol:
        raise ContractViolation("complete_frame needs two orthonormal vectors")
    return assemble_frames(n1[None, :], n2[None, :], np.asarray(r_bar, dtype=np.float64)[None, :]).data[0]

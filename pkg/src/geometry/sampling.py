"""
Farthest point sampling and tie-tolerant extremum selection.

Distances recomputed after a rigid motion differ by a few ulps, so exact ``argmax`` would pick a
different member of a tied set. Values within ``TIE_RTOL`` of the cloud's extent count as tied and
the lowest index wins.
"""
from typing import Union

import numpy as np

from src.core.config import settings
from src.core.errors import ContractViolation
from src.geometry.point_cloud import PointCloud


def cloud_extent(positions: np.ndarray) -> float:
    """Largest distance from the mean position; invariant under rigid motions."""
    if positions.shape[0] == 0:
        return 0.0
    return float(np.max(np.linalg.norm(positions - positions.mean(axis=0), axis=1)))


def tied_argmax(values: np.ndarray, tol: float) -> int:
    """Lowest index whose value is within ``tol`` of the maximum."""
    return int(np.flatnonzero(values >= values.max() - tol)[0])


def tied_argmin(values: np.ndarray, tol: float) -> int:
    """Lowest index whose value is within ``tol`` of the minimum."""
    return int(np.flatnonzero(values <= values.min() + tol)[0])


def farthest_point_sampling(
    cloud: Union[PointCloud, np.ndarray], count: int, start: int = 0, rtol: float = settings.TIE_RTOL
) -> np.ndarray:
    """Greedy max-min subset in selection order; ties go to the lowest node index."""
    positions = cloud.positions if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    n = positions.shape[0]
    if not 1 <= count <= n:
        raise ContractViolation(f"sample count {count} outside [1, {n}]")
    if not 0 <= start < n:
        raise ContractViolation(f"start node {start} outside [0, {n})")
    tol = rtol * cloud_extent(positions)
    selected = np.empty(count, dtype=np.int64)
    selected[0] = start
    min_dist = np.linalg.norm(positions - positions[start], axis=1)
    min_dist[start] = -1.0
    for k in range(1, count):
        nxt = tied_argmax(min_dist, tol)
        selected[k] = nxt
        min_dist = np.minimum(min_dist, np.linalg.norm(positions - positions[nxt], axis=1))
        min_dist[selected[:k + 1]] = -1.0
    return selected


def subsample_count(n: int, fraction: float) -> int:
    if not 0.0 < fraction <= 1.0:
        raise ContractViolation(f"subsample fraction must lie in (0, 1], got {fraction}")
    return max(1, min(n, int(np.ceil(fraction * n - 1e-9))))

"""
Point clouds: node positions plus named feature blocks, each tagged with its representation.
"""
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from src.core.errors import ContractViolation
from src.reps.representation import FeatureBlock, apply_rep
from src.reps.spec import RepSpec, RepTerm

NORMAL_TOL = 1e-9


@dataclass(frozen=True)
class PointCloud:
    positions: np.ndarray
    features: Mapping[str, FeatureBlock] = field(default_factory=dict)
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[0] == 0:
            raise ContractViolation(f"positions must be a non-empty N x d matrix, got shape {positions.shape}")
        object.__setattr__(self, "positions", positions)
        n = positions.shape[0]
        for name, block in self.features.items():
            if block.num_nodes != n:
                raise ContractViolation(f"feature block {name!r} has {block.num_nodes} rows for {n} nodes")
            if block.spec.dim_space != positions.shape[1]:
                raise ContractViolation(f"feature block {name!r} lives in d={block.spec.dim_space}")
        object.__setattr__(self, "features", dict(self.features))
        if self.normals is not None:
            normals = np.asarray(self.normals, dtype=np.float64)
            if normals.shape != positions.shape:
                raise ContractViolation(f"normals of shape {normals.shape} for positions {positions.shape}")
            if np.any(np.abs(np.linalg.norm(normals, axis=1) - 1.0) > NORMAL_TOL):
                raise ContractViolation("stored normals must have unit norm")
            object.__setattr__(self, "normals", normals)

    @property
    def num_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def stacked_features(self) -> tuple[Optional[RepSpec], np.ndarray]:
        """All feature blocks side by side, in insertion order, with their combined representation."""
        if not self.features:
            return None, np.zeros((self.num_nodes, 0))
        terms: list[RepTerm] = []
        for block in self.features.values():
            terms.extend(block.spec.terms)
        values = np.concatenate([b.values for b in self.features.values()], axis=1)
        return RepSpec(terms=tuple(terms), dim_space=self.dim), values

    def transformed(self, R: np.ndarray, translation: Optional[np.ndarray] = None) -> "PointCloud":
        """The cloud after x -> R x + t; features and normals follow their representations."""
        R = np.asarray(R, dtype=np.float64)
        positions = self.positions @ R.T
        if translation is not None:
            positions = positions + np.asarray(translation, dtype=np.float64)
        features = {name: apply_rep(b.spec, R, b) for name, b in self.features.items()}
        normals = None if self.normals is None else self.normals @ R.T
        return PointCloud(positions=positions, features=features, normals=normals)

    def translated(self, offset: np.ndarray) -> "PointCloud":
        return PointCloud(
            positions=self.positions + np.asarray(offset, dtype=np.float64),
            features=self.features, normals=self.normals,
        )

    def with_positions(self, positions: np.ndarray) -> "PointCloud":
        return PointCloud(positions=positions, features=self.features, normals=self.normals)

"""Synthetic datasets with analytic ground truth, and their on-disk layout."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from src.core.errors import ConfigError
from src.core.logging import data_logger
from src.geometry.io import read_point_cloud, write_point_cloud
from src.geometry.point_cloud import PointCloud
from src.reps.representation import random_orthogonal
from src.schemas.task import SEGMENTATION_FAMILIES, SHAPE_FAMILIES, TaskSpec
from src.utils.files import atomic_write_json
from src.utils.rng import STREAM_DATA, generator

TORUS_MAJOR = 1.0
TORUS_MINOR = 0.3
SUPERELLIPSOID_AXES = np.array([1.0, 0.8, 0.6])
SUPERELLIPSOID_EXPONENT = 0.5

RELAY_STEP = 0.12
RELAY_SHELL = (0.35, 1.0)

MANIFEST = "dataset.json"


@dataclass(frozen=True)
class Sample:
    cloud: PointCloud
    target: Union[np.ndarray, int]
    family: str
    rotation: np.ndarray


@dataclass(frozen=True)
class RotatedSenderPair:
    """Two clouds that differ only by a rigid rotation of the sender's side about the receiver-sender axis."""
    base: PointCloud
    rotated: PointCloud
    receiver: int
    sender: int
    rotation: np.ndarray
    radius: float


def _unit_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sphere_points(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    p = _unit_rows(rng.standard_normal((n, 3)))
    return p, p.copy()


def torus_point(theta, phi, major: float = TORUS_MAJOR, minor: float = TORUS_MINOR) -> tuple[np.ndarray, np.ndarray]:
    """Point and outward normal at tube angle ``theta`` and ring angle ``phi``."""
    theta, phi = np.asarray(theta, dtype=np.float64), np.asarray(phi, dtype=np.float64)
    ring = major + minor * np.cos(theta)
    point = np.stack([ring * np.cos(phi), ring * np.sin(phi), minor * np.sin(theta)], axis=-1)
    normal = np.stack([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), np.sin(theta)], axis=-1)
    return point, normal


def torus_points(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    # Accept tube angles in proportion to the local area element.
    thetas = np.empty(0)
    while thetas.size < n:
        candidates = rng.uniform(0.0, 2 * np.pi, size=2 * n)
        keep = rng.uniform(size=2 * n) < (TORUS_MAJOR + TORUS_MINOR * np.cos(candidates)) / (TORUS_MAJOR + TORUS_MINOR)
        thetas = np.concatenate([thetas, candidates[keep]])
    phis = rng.uniform(0.0, 2 * np.pi, size=n)
    return torus_point(thetas[:n], phis)


def superellipsoid_points(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Radial projection of sphere samples onto sum |x_k / a_k|^(2/e) = 1, normals from the gradient."""
    power = 2.0 / SUPERELLIPSOID_EXPONENT
    directions = _unit_rows(rng.standard_normal((n, 3)))
    level = np.sum(np.abs(directions / SUPERELLIPSOID_AXES) ** power, axis=1)
    points = directions * level[:, None] ** (-1.0 / power)
    scaled = points / SUPERELLIPSOID_AXES
    gradient = np.sign(scaled) * np.abs(scaled) ** (power - 1) / SUPERELLIPSOID_AXES
    return points, _unit_rows(gradient)


_SURFACES = {"sphere": sphere_points, "torus": torus_points, "superellipsoid": superellipsoid_points}


def part_labels(family: str, points: np.ndarray) -> np.ndarray:
    """Surface regions of an unrotated shape.

    Torus: outer rim (cos theta >= 1/2), inner rim (cos theta <= -1/2), top and bottom bands.
    Superellipsoid: the cap around the principal axis with the largest normalised coordinate.
    """
    if family == "torus":
        cos_theta = (np.linalg.norm(points[:, :2], axis=1) - TORUS_MAJOR) / TORUS_MINOR
        return np.where(cos_theta >= 0.5, 0, np.where(cos_theta <= -0.5, 1, 2)).astype(np.int64)
    if family == "superellipsoid":
        return np.argmax(np.abs(points / SUPERELLIPSOID_AXES), axis=1).astype(np.int64)
    raise ConfigError(f"no part labels for shape family {family!r}; choose from {', '.join(SEGMENTATION_FAMILIES)}")


class DatasetService:
    """Generation, splitting and persistence of synthetic point-cloud tasks."""

    @staticmethod
    def sample_surface(family: str, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        if family not in _SURFACES:
            raise ConfigError(f"unknown shape family {family!r}; choose from {', '.join(SHAPE_FAMILIES)}")
        return _SURFACES[family](n, rng)

    @staticmethod
    def gen_dataset(spec: TaskSpec, rng: Optional[np.random.Generator] = None) -> list[Sample]:
        """Samples for ``spec.task``; the seed alone fixes every draw."""
        if spec.task == "directional-relay":
            return DatasetService.gen_directional_relay(spec, rng)
        rng = rng or generator(spec.seed, STREAM_DATA)
        data = spec.dataset
        samples = []
        for k in range(data.count):
            family = SHAPE_FAMILIES[k % len(SHAPE_FAMILIES)] if spec.task == "shape-classification" else data.family
            positions, normals = DatasetService.sample_surface(family, data.n_points, rng)
            if spec.task == "shape-classification":
                target = SHAPE_FAMILIES.index(family)
            elif spec.task == "part-segmentation":
                target = part_labels(family, positions)
            rotation = random_orthogonal(rng, "O(d)") if data.pre_rotate else np.eye(3)
            positions, normals = positions @ rotation.T, normals @ rotation.T
            if data.noise > 0:
                positions = positions + data.noise * rng.standard_normal(positions.shape)
            cloud = PointCloud(positions=positions, normals=normals)
            if spec.task == "normal-regression":
                target = normals
            samples.append(Sample(cloud=cloud, target=target, family=family, rotation=rotation))
        data_logger.info(f"generated {len(samples)} {spec.task} samples ({data.n_points} points each)")
        return samples

    @staticmethod
    def gen_directional_relay(spec: TaskSpec, rng: Optional[np.random.Generator] = None) -> list[Sample]:
        """A collinear marker triplet at the origin inside a background shell; every node must output
        the marker direction.

        Markers sit at 0, s u and 2.5 s u, so the uneven spacing fixes the sign of u. The shell starts
        beyond the message radius of the relay preset, so outer nodes only learn u through relays.
        """
        rng = rng or generator(spec.seed, STREAM_DATA)
        data = spec.dataset
        inner, outer = RELAY_SHELL
        samples = []
        for _ in range(data.count):
            u = _unit_rows(rng.standard_normal((1, 3)))[0]
            markers = np.stack([np.zeros(3), RELAY_STEP * u, 2.5 * RELAY_STEP * u])
            m = data.n_points - 3
            radii = (inner ** 3 + rng.uniform(size=m) * (outer ** 3 - inner ** 3)) ** (1.0 / 3.0)
            shell = _unit_rows(rng.standard_normal((m, 3))) * radii[:, None]
            positions = np.concatenate([markers, shell])
            rotation = random_orthogonal(rng, "O(d)") if data.pre_rotate else np.eye(3)
            positions, u = positions @ rotation.T, rotation @ u
            if data.noise > 0:
                positions = positions + data.noise * rng.standard_normal(positions.shape)
            samples.append(
                Sample(cloud=PointCloud(positions=positions), target=np.tile(u, (data.n_points, 1)),
                       family="relay", rotation=rotation)
            )
        data_logger.info(f"generated {len(samples)} directional-relay samples")
        return samples

    @staticmethod
    def rotated_sender_pair(angle: float = np.pi / 2, seed: int = 0, cluster: int = 6) -> RotatedSenderPair:
        """Receiver i at the origin with cluster A behind it, sender j at (1, 0, 0) with cluster B beyond it.

        With radius 1.05, i sees A and j; j sees i and B; A and B never meet. B is rotated rigidly by
        ``angle`` about the x axis through j, which leaves every distance at i and at j unchanged.
        """
        rng = np.random.default_rng(seed)
        receiver, sender = np.zeros(3), np.array([1.0, 0.0, 0.0])
        side_a = np.column_stack([rng.uniform(-0.35, -0.1, cluster), rng.uniform(-0.2, 0.2, (cluster, 2))])
        side_b = np.column_stack([rng.uniform(1.1, 1.35, cluster), rng.uniform(-0.2, 0.2, (cluster, 2))])
        c, s = np.cos(angle), np.sin(angle)
        rotation = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
        rotated_b = (side_b - sender) @ rotation.T + sender
        base = np.vstack([receiver, sender, side_a, side_b])
        moved = np.vstack([receiver, sender, side_a, rotated_b])
        return RotatedSenderPair(
            base=PointCloud(positions=base), rotated=PointCloud(positions=moved),
            receiver=0, sender=1, rotation=rotation, radius=1.05,
        )

    @staticmethod
    def split(samples: list[Sample]) -> tuple[list[Sample], list[Sample]]:
        """The last quarter (at least one sample) is held out for evaluation."""
        held = max(1, len(samples) // 4)
        train, evaluation = samples[:-held], samples[-held:]
        return (train or evaluation), evaluation

    @staticmethod
    def write_dataset(samples: list[Sample], directory: Path, spec: TaskSpec) -> Path:
        directory = Path(directory)
        files = []
        for k, sample in enumerate(samples):
            name = f"sample_{k:04d}.xyz"
            target, labels = None, None
            if isinstance(sample.target, (int, np.integer)):
                target = int(sample.target)
            elif spec.task == "directional-relay":
                target = [float(x) for x in np.asarray(sample.target)[0]]
            elif spec.task == "part-segmentation":
                labels = [int(x) for x in sample.target]
            write_point_cloud(
                directory / name, sample.cloud, family=sample.family, target=target, labels=labels,
                rotation=sample.rotation.tolist(), noise=spec.dataset.noise,
            )
            files.append(name)
        atomic_write_json(directory / MANIFEST, {"task": spec.model_dump(mode="json"), "samples": files})
        data_logger.info(f"wrote {len(files)} samples to {directory}")
        return directory / MANIFEST

    @staticmethod
    def load_dataset(directory: Path) -> tuple[TaskSpec, list[Sample]]:
        directory = Path(directory)
        manifest = directory / MANIFEST
        if not manifest.exists():
            raise ConfigError(f"no dataset manifest at {manifest}")
        with open(manifest, encoding="utf-8") as handle:
            payload = json.load(handle)
        spec = TaskSpec.model_validate(payload["task"])
        samples = []
        for name in payload["samples"]:
            cloud, header = read_point_cloud(directory / name)
            if spec.task == "shape-classification":
                target = int(header.target)
            elif spec.task == "directional-relay":
                target = np.tile(np.asarray(header.target, dtype=np.float64), (cloud.num_nodes, 1))
            elif spec.task == "part-segmentation":
                if header.labels is None:
                    raise ConfigError(f"{directory / name}: part-segmentation sample without labels")
                target = np.asarray(header.labels, dtype=np.int64)
            else:
                target = cloud.normals
            rotation = np.asarray(header.rotation) if header.rotation is not None else np.eye(3)
            samples.append(Sample(cloud=cloud, target=target, family=header.family or "", rotation=rotation))
        return spec, samples

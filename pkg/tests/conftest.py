from __future__ import annotations

import numpy as np
import pytest

from src.geometry.point_cloud import PointCloud
from src.reps.representation import FeatureBlock, random_orthogonal
from src.reps.spec import parse_rep_spec
from src.schemas.pipeline import FrameConfig, HeadConfig, LayerConfig, PipelineConfig
from src.schemas.task import DatasetSpec, TaskSpec, TrainingSpec

MIXED_REP = "2x0n+1x0p+1x1n+1x1p+1x2n"
HIDDEN_REP = "3x0n+1x0p+2x1n+1x1p+1x2n"


def build_cloud(rng: np.random.Generator, n: int = 40, rep: str | None = MIXED_REP, spread: float = 0.5) -> PointCloud:
    positions = rng.uniform(-spread, spread, size=(n, 3))
    if rep is None:
        return PointCloud(positions=positions)
    spec = parse_rep_spec(rep)
    block = FeatureBlock(values=rng.standard_normal((n, spec.width)), spec=spec)
    return PointCloud(positions=positions, features={"f": block})


def build_config(
    layout: str = "message",
    mode: str = "tensorial",
    provenance: str = "learned",
    refine: bool = False,
    rho_in: str | None = MIXED_REP,
    rho_out: str = "1x1n+1x0p",
) -> PipelineConfig:
    """Small pipelines over the 40-node unit-cube cloud."""
    if layout == "message":
        layers = [
            LayerConfig(type="message", rep=HIDDEN_REP, hidden=[8], radius=0.45, refine=refine),
            LayerConfig(type="message", rep=HIDDEN_REP, hidden=[8], radius=0.45, refine=refine),
        ]
    elif layout == "pointnet":
        layers = [
            LayerConfig(type="encoder", rep=HIDDEN_REP, hidden=[8], radius=0.5, fraction=0.5, refine=refine),
            LayerConfig(type="encoder", rep=HIDDEN_REP, hidden=[8], radius=0.8, fraction=0.5, refine=refine),
            LayerConfig(type="decoder", rep=HIDDEN_REP, hidden=[8], refine=refine),
            LayerConfig(type="decoder", rep=HIDDEN_REP, hidden=[8]),
        ]
    elif layout == "pool":
        layers = [
            LayerConfig(type="encoder", rep=HIDDEN_REP, hidden=[8], radius=0.5, fraction=0.5, refine=refine),
            LayerConfig(type="pool", rep=HIDDEN_REP, hidden=[8]),
        ]
    else:
        raise ValueError(layout)
    return PipelineConfig(
        rho_in=rho_in,
        rho_out=rho_out,
        mode=mode,
        radial_k=4,
        frames=FrameConfig(provenance=provenance, radius=0.8, hidden=[8]),
        layers=layers,
        head=HeadConfig(hidden=[8]),
    )


def build_task(task: str = "normal-regression", steps: int = 0, **dataset) -> TaskSpec:
    """Desk-scale task on 32-point clouds with a one-level encoder/decoder."""
    rep = "2x0n+1x0p+1x1n"
    labelled = task in ("shape-classification", "part-segmentation")
    last = (
        LayerConfig(type="pool", rep=rep, hidden=[8])
        if task == "shape-classification"
        else LayerConfig(type="decoder", rep=rep, hidden=[8])
    )
    pipeline = PipelineConfig(
        rho_out="3x0n" if labelled else "1x1n",
        radial_k=4,
        frames=FrameConfig(radius=1.5, hidden=[8]),
        layers=[LayerConfig(type="encoder", rep=rep, hidden=[8], radius=1.0, fraction=0.5), last],
        head=HeadConfig(hidden=[8], normalize=not labelled),
    )
    data = {"n_points": 32, "count": 4} | ({"family": "torus"} if task == "part-segmentation" else {}) | dataset
    return TaskSpec(
        task=task,
        dataset=DatasetSpec(**data),
        pipeline=pipeline,
        training=TrainingSpec(lr=1e-2, steps=steps, warmup=1 if steps else 0, eval_every=1, seed=7),
    )


@pytest.fixture
def rng():
    """Seeded generator, fresh per test."""

    return np.random.default_rng(20240611)


@pytest.fixture
def cloud(rng):
    """Forty nodes in the unit cube carrying one block of every term kind."""

    return build_cloud(rng)


@pytest.fixture
def transforms(rng):
    """Twenty (Q, t) pairs; odd entries are reflections."""

    return [(random_orthogonal(rng, "O(d)", reflect=bool(k % 2)), rng.standard_normal(3)) for k in range(20)]


@pytest.fixture
def make_config():
    return build_config


@pytest.fixture
def make_task():
    return build_task

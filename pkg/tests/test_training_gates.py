"""
Desk-scale training gates. Deselected by default; run with ``pytest -m slow``.
"""
from __future__ import annotations

import numpy as np
import pytest

from src.schemas.task import DatasetSpec, TaskSpec, TrainingSpec
from src.services.ablation_service import AblationService
from src.services.training_service import TrainingService

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


@pytest.mark.parametrize("family", ["sphere", "torus"])
def test_normal_regression_reaches_target(family):
    finals = []
    for seed in SEEDS:
        spec = TaskSpec(
            task="normal-regression",
            dataset=DatasetSpec(family=family, n_points=128, count=64),
            training=TrainingSpec(steps=2000, seed=seed),
            frames="learned",
            mode="tensorial",
            refine=True,
        )
        finals.append(TrainingService.train(spec).report.final_metric)
    assert min(finals) >= 0.95, finals
    assert max(finals) - min(finals) <= 0.04, finals


def test_relay_ordering():
    cells = []
    for seed in SEEDS:
        spec = TaskSpec(
            task="directional-relay",
            dataset=DatasetSpec(n_points=128, count=64),
            training=TrainingSpec(steps=2000, seed=seed),
        )
        table, _ = AblationService.ablation_matrix(spec)
        cells.append(table.set_index(["frames", "mode"])["final_metric"])
    median = {key: float(np.median([c[key] for c in cells])) for key in cells[0].index}

    learned_tensorial = median[("learned", "tensorial")]
    assert learned_tensorial - median[("random", "tensorial")] >= 0.01, median
    assert learned_tensorial - median[("learned", "scalar")] >= 0.01, median
    assert median[("random", "tensorial")] - median[("learned", "scalar")] >= 0.01, median

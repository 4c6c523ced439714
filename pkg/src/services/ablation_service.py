"""Comparative runs: the frames x message-mode ablation grid, the data-efficiency sweep and the
noise-robustness study."""

import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.core.errors import ConfigError
from src.core.logging import train_logger
from src.schemas.report import RunReport
from src.schemas.task import TaskSpec
from src.services.audit_service import AuditService
from src.services.dataset_service import DatasetService
from src.services.training_service import TrainingService, metric_name
from src.utils.files import atomic_write_csv

ABLATION_FRAMES = ("learned", "random")
ABLATION_MODES = ("tensorial", "scalar")


def _summary(kind: str, spec: TaskSpec, cells: list[RunReport], started: float, **arguments) -> RunReport:
    return RunReport(
        kind=kind,
        task=spec.task,
        metric_name=metric_name(spec.task),
        steps=spec.training.steps,
        cells=cells,
        config=TrainingService.run_config(spec, **arguments),
        wall_clock_seconds=time.perf_counter() - started,
    )


class AblationService:
    @staticmethod
    def ablation_matrix(spec: TaskSpec, out_dir: Optional[Path] = None) -> tuple[pd.DataFrame, pd.DataFrame]:
        """Train every {learned, random} x {tensorial, scalar} cell on one dataset with one seed.

        Returns the long table and its pivot (frames as rows, modes as columns). With ``out_dir`` the
        report embeds every cell's own RunReport.
        """
        started = time.perf_counter()
        samples = DatasetService.gen_dataset(spec)
        rows, cells = [], []
        for frames in ABLATION_FRAMES:
            for mode in ABLATION_MODES:
                cell = spec.with_overrides(frames=frames, mode=mode, refine=False)
                run = TrainingService.train(cell, samples)
                cells.append(run.report)
                rows.append({
                    "frames": frames,
                    "mode": mode,
                    "final_metric": run.report.final_metric,
                    "parameter_count": run.report.parameter_count,
                    "frame_parameter_count": run.report.frame_parameter_count,
                })
                train_logger.info(f"ablation {frames}/{mode}: {run.report.final_metric:.4f}")
        table = pd.DataFrame(rows)
        pivot = table.pivot(index="frames", columns="mode", values="final_metric").reindex(
            index=list(ABLATION_FRAMES), columns=list(ABLATION_MODES)
        ).reset_index()
        if out_dir is not None:
            atomic_write_csv(Path(out_dir) / "ablation.csv", table)
            atomic_write_csv(Path(out_dir) / "ablation_table.csv", pivot)
            TrainingService.write_report(_summary("ablation", spec, cells, started), out_dir)
        return table, pivot

    @staticmethod
    def data_efficiency_sweep(
        spec: TaskSpec, fractions: Sequence[float], out_dir: Optional[Path] = None
    ) -> pd.DataFrame:
        """Built-in equivariance (learned frames) against augmentation (a constant random frame per step).

        Each fraction keeps that share of the training split; the evaluation split is shared.
        """
        if not fractions or any(not 0.0 < f <= 1.0 for f in fractions):
            raise ConfigError("sweep fractions must lie in (0, 1]")
        started = time.perf_counter()
        samples = DatasetService.gen_dataset(spec)
        train_set, eval_set = DatasetService.split(samples)
        rows, cells = [], []
        for fraction in fractions:
            subset = train_set[: max(1, int(round(fraction * len(train_set))))]
            for mode, frames in (("equivariant", "learned"), ("augmented", "constant")):
                run = TrainingService.train(spec.with_overrides(frames=frames), subset, eval_set)
                cells.append(run.report)
                rows.append({"fraction": float(fraction), "mode": mode, "final_error": 1.0 - run.report.final_metric})
        table = pd.DataFrame(rows, columns=["fraction", "mode", "final_error"])
        table["log_fraction"] = np.log10(table["fraction"])
        table["log_error"] = np.log10(table["final_error"].clip(lower=1e-12))
        if out_dir is not None:
            atomic_write_csv(Path(out_dir) / "sweep.csv", table)
            summary = _summary("sweep", spec, cells, started, fractions=[float(f) for f in fractions])
            TrainingService.write_report(summary, out_dir)
        return table

    @staticmethod
    def robustness_study(
        spec: TaskSpec, sigmas: Sequence[float], jitter: float, out_dir: Optional[Path] = None
    ) -> pd.DataFrame:
        """Task metric against evaluation noise for a model trained clean and one trained with ``jitter``.

        Both runs share the dataset, seed and split; the table has columns train_jitter, sigma, loss, metric.
        """
        if not jitter > 0:
            raise ConfigError(f"the jittered run needs a positive train jitter, got {jitter}")
        if not sigmas or any(s < 0 for s in sigmas):
            raise ConfigError("noise scales must be a non-empty list of non-negative values")
        started = time.perf_counter()
        samples = DatasetService.gen_dataset(spec)
        train_set, eval_set = DatasetService.split(samples)
        rows, cells = [], []
        for train_jitter in (0.0, float(jitter)):
            variant = spec.with_overrides(train_jitter=train_jitter)
            run = TrainingService.train(variant, train_set, eval_set)
            audited = AuditService.audit_robustness(run.pipeline, variant, eval_set, sigmas, variant.seed)
            cells.append(run.report.model_copy(update={"robustness": audited}))
            rows.extend(row.model_dump() for row in audited)
        table = pd.DataFrame(rows, columns=["train_jitter", "sigma", "loss", "metric"])
        if out_dir is not None:
            atomic_write_csv(Path(out_dir) / "robustness.csv", table)
            summary = _summary(
                "robustness", spec, cells, started, sigmas=[float(s) for s in sigmas], jitter=float(jitter)
            )
            TrainingService.write_report(summary, out_dir)
        return table

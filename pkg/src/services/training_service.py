"""Desk-scale training loop and run reporting."""

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from src.core.errors import ConfigError, TrainingDivergence
from src.core.logging import log_error, log_training_step, train_logger
from src.mp.pipeline import Pipeline, build_pipeline
from src.netcore import losses
from src.netcore.checkpoint import load_checkpoint, read_manifest, save_checkpoint
from src.netcore.optim import AdamW, clip_grad_norm, cosine_lr_schedule
from src.netcore.tape import Tape, Value
from src.schemas.report import MetricPoint, RunReport
from src.schemas.task import TaskSpec
from src.services.dataset_service import DatasetService, Sample
from src.utils.files import atomic_write_csv, atomic_write_json
from src.utils.rng import STREAM_DATA, STREAM_EVAL, STREAM_FRAMES, STREAM_JITTER, generator


@dataclass
class TrainingRun:
    report: RunReport
    pipeline: Pipeline


METRIC_NAMES = {"shape-classification": "accuracy", "part-segmentation": "mean_iou"}


def metric_name(task: str) -> str:
    return METRIC_NAMES.get(task, "cosine_similarity")


class TrainingService:
    """Static helpers around one training run: loss, evaluation, loop and outputs."""

    @staticmethod
    def sample_loss(spec: TaskSpec, output: Value, sample: Sample) -> Value:
        if spec.is_labelled:
            return losses.cross_entropy(output, np.atleast_1d(sample.target), spec.training.label_smoothing)
        return 1.0 - losses.cosine_similarity(output, sample.target)

    @staticmethod
    def sample_metric(spec: TaskSpec, output: Value, sample: Sample) -> float:
        if spec.task == "shape-classification":
            return losses.accuracy(output, [sample.target])
        if spec.task == "part-segmentation":
            return losses.mean_iou(output, sample.target, output.shape[-1])
        return losses.cosine_similarity(output, sample.target).item()

    @staticmethod
    def evaluate(pipeline: Pipeline, spec: TaskSpec, samples: list[Sample]) -> tuple[float, float]:
        """Mean loss and metric over ``samples`` in evaluation mode with a fixed frame stream."""
        was_training = pipeline.training
        pipeline.eval()
        frame_rng = generator(spec.seed, STREAM_EVAL)
        loss_sum, metric_sum = 0.0, 0.0
        for sample in samples:
            output = pipeline.forward(sample.cloud, frame_rng=frame_rng).output
            loss_sum += TrainingService.sample_loss(spec, output, sample).item()
            metric_sum += TrainingService.sample_metric(spec, output, sample)
        pipeline.train(was_training)
        count = max(len(samples), 1)
        return loss_sum / count, metric_sum / count

    @staticmethod
    def train(
        spec: TaskSpec,
        samples: Optional[list[Sample]] = None,
        eval_samples: Optional[list[Sample]] = None,
    ) -> TrainingRun:
        """Train the task's pipeline with AdamW, warmup + cosine schedule and gradient clipping.

        Constant-frame provenance draws a fresh shared frame every step, which is data augmentation.
        Without ``eval_samples`` the last quarter of ``samples`` is held out.
        """
        started = time.perf_counter()
        samples = samples if samples is not None else DatasetService.gen_dataset(spec)
        if not samples:
            raise ConfigError("training needs at least one sample")
        if eval_samples is not None:
            train_set, eval_set = samples, eval_samples
        else:
            train_set, eval_set = DatasetService.split(samples)
        config = spec.resolved_pipeline()
        pipeline = build_pipeline(config, spec.seed)
        params = pipeline.parameters()
        hp = spec.training
        optimizer = AdamW(params, lr=hp.lr, betas=hp.betas, weight_decay=hp.weight_decay)
        order_rng = generator(spec.seed, STREAM_DATA, 1)
        jitter_rng = generator(spec.seed, STREAM_JITTER)
        frame_rng = generator(spec.seed, STREAM_FRAMES)

        loss, metric = TrainingService.evaluate(pipeline, spec, eval_set)
        history = [MetricPoint(step=0, loss=loss, metric=metric, lr=0.0)]
        train_logger.info(
            f"{spec.task}: {pipeline.parameter_count()} parameters, {len(train_set)} train / "
            f"{len(eval_set)} eval samples, {hp.steps} steps"
        )
        order = np.empty(0, dtype=np.int64)
        for step in range(hp.steps):
            if order.size == 0:
                order = order_rng.permutation(len(train_set))
            sample, order = train_set[int(order[0])], order[1:]
            cloud = sample.cloud
            if hp.train_jitter > 0:
                cloud = cloud.with_positions(cloud.positions + hp.train_jitter * jitter_rng.standard_normal(cloud.positions.shape))
            lr = cosine_lr_schedule(step, hp.steps, hp.warmup, hp.lr)

            with Tape() as tape:
                output = pipeline.forward(cloud, frame_rng=frame_rng).output
                loss = TrainingService.sample_loss(spec, output, sample)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                error = TrainingDivergence(step, loss_value)
                log_error(error, "training loop")
                raise error
            grads, _ = clip_grad_norm(tape.gradients(loss, params), hp.clip)
            optimizer.step(grads, lr=lr)

            if (step + 1) % hp.eval_every == 0 or step + 1 == hp.steps:
                eval_loss, metric = TrainingService.evaluate(pipeline, spec, eval_set)
                history.append(MetricPoint(step=step + 1, loss=eval_loss, metric=metric, lr=lr))
                log_training_step(step + 1, loss_value, lr, metric)

        report = RunReport(
            kind="train",
            task=spec.task,
            metric_name=metric_name(spec.task),
            metrics=history,
            final_metric=history[-1].metric,
            parameter_count=pipeline.parameter_count(),
            frame_parameter_count=pipeline.frame_parameter_count,
            steps=hp.steps,
            config=spec.model_dump(mode="json") | {"resolved_pipeline": config.model_dump(mode="json")},
            wall_clock_seconds=time.perf_counter() - started,
        )
        return TrainingRun(report=report, pipeline=pipeline)

    @staticmethod
    def run_config(spec: TaskSpec, **extra) -> dict:
        """Config echo: the task document, the pipeline it resolves to and any run-specific arguments."""
        config = spec.model_dump(mode="json") | {"resolved_pipeline": spec.resolved_pipeline().model_dump(mode="json")}
        return config | extra

    @staticmethod
    def write_report(report: RunReport, out_dir: Path) -> Path:
        path = Path(out_dir) / "report.json"
        atomic_write_json(path, report.model_dump(mode="json"))
        train_logger.info(f"{report.kind} report written to {path}")
        return path

    @staticmethod
    def write_outputs(run: TrainingRun, spec: TaskSpec, out_dir: Path) -> Path:
        """``report.json``, ``metrics.csv`` and the checkpoint pair."""
        out_dir = Path(out_dir)
        atomic_write_csv(out_dir / "metrics.csv", pd.DataFrame([m.model_dump() for m in run.report.metrics]))
        save_checkpoint(
            out_dir, run.pipeline, seed=spec.seed, step=run.report.steps,
            config=run.pipeline.config.model_dump(mode="json"), task=spec.model_dump(mode="json"),
        )
        return TrainingService.write_report(run.report, out_dir)

    @staticmethod
    def load_trained(checkpoint_dir: Path) -> tuple[TaskSpec, Pipeline]:
        """Rebuild the pipeline a checkpoint was saved from and load its parameters."""
        manifest = read_manifest(checkpoint_dir)
        if manifest.task is None:
            raise ConfigError(f"checkpoint in {checkpoint_dir} does not record its task")
        spec = TaskSpec.model_validate(manifest.task)
        pipeline = build_pipeline(spec.resolved_pipeline(), manifest.seed)
        load_checkpoint(checkpoint_dir, pipeline)
        return spec, pipeline

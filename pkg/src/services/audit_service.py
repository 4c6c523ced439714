"""Equivariance and frame-stability audits of trained or freshly built pipelines."""

from dataclasses import replace
from typing import Literal, Sequence

import numpy as np

from src.core.errors import ConfigError
from src.core.logging import audit_logger
from src.frames.builders import FrameSet, build_learned_frames, build_pca_frames
from src.frames.metrics import frame_stability_metrics
from src.geometry.graph import radius_graph
from src.geometry.point_cloud import PointCloud
from src.mp.pipeline import Pipeline, run_pipeline
from src.reps.representation import apply_rep, random_orthogonal
from src.schemas.report import AuditRow, RobustnessRow, RunReport, StabilityRow
from src.schemas.task import TaskSpec
from src.services.dataset_service import Sample
from src.services.training_service import TrainingService, metric_name
from src.utils.rng import STREAM_AUDIT, STREAM_EVAL, generator


class AuditService:
    """Audits never train; they run pipelines in evaluation mode with a fixed frame stream."""

    @staticmethod
    def _run(pipeline: Pipeline, cloud: PointCloud) -> np.ndarray:
        return run_pipeline(pipeline, cloud, frame_rng=generator(pipeline.seed, STREAM_EVAL)).values

    @staticmethod
    def audit_equivariance(
        pipeline: Pipeline, samples: Sequence[Sample], n_transforms: int, seed: int = 0
    ) -> list[AuditRow]:
        """max |run(Q x + t) - rho_out(Q) run(x)| per sample and transform; odd transforms are reflections.

        Each sample also gets one translation-only row.
        """
        if n_transforms <= 0:
            return []
        was_training = pipeline.training
        pipeline.eval()
        rng = generator(seed, STREAM_AUDIT)
        rows = []
        for index, sample in enumerate(samples):
            base = run_pipeline(pipeline, sample.cloud, frame_rng=generator(pipeline.seed, STREAM_EVAL))
            for t in range(n_transforms):
                Q = random_orthogonal(rng, "O(d)", reflect=bool(t % 2))
                shift = rng.standard_normal(3)
                moved = AuditService._run(pipeline, sample.cloud.transformed(Q, shift))
                expected = apply_rep(pipeline.rho_out, Q, base).values
                rows.append(AuditRow(
                    sample=index, transform=t, kind="reflection" if t % 2 else "rotation",
                    det=float(np.linalg.det(Q)), max_deviation=float(np.max(np.abs(moved - expected))),
                ))
            shifted = AuditService._run(pipeline, sample.cloud.translated(rng.standard_normal(3)))
            rows.append(AuditRow(
                sample=index, transform=n_transforms, kind="translation", det=1.0,
                max_deviation=float(np.max(np.abs(shifted - base.values))),
            ))
        pipeline.train(was_training)
        worst = max(r.max_deviation for r in rows) if rows else 0.0
        audit_logger.info(f"equivariance audit: {len(rows)} rows, worst deviation {worst:.3e}")
        return rows

    @staticmethod
    def frames_for(pipeline: Pipeline, cloud: PointCloud, provenance: Literal["learned", "pca"]) -> FrameSet:
        graph = radius_graph(cloud, pipeline.config.frames.radius)
        if provenance == "pca":
            return build_pca_frames(cloud, graph)
        if pipeline.frame_net is None:
            raise ConfigError("learned-frame stability needs a pipeline trained with learned frames")
        raw = pipeline.raw_features(cloud)
        return build_learned_frames(cloud, graph, pipeline.frame_net, raw[:, pipeline.scalar_mask], pipeline.seed)

    @staticmethod
    def audit_frame_stability(
        pipeline: Pipeline,
        samples: Sequence[Sample],
        sigmas: Sequence[float],
        provenance: Literal["learned", "pca"] = "learned",
        seed: int = 0,
    ) -> list[StabilityRow]:
        """Frames on jittered positions against frames on the clean cloud, averaged over samples."""
        if provenance not in ("learned", "pca"):
            raise ConfigError(f"frame stability is defined for learned or pca frames, not {provenance!r}")
        rng = generator(seed, STREAM_AUDIT, 1)
        rows = []
        clean = [AuditService.frames_for(pipeline, s.cloud, provenance) for s in samples]
        for sigma in sigmas:
            frob, cosines = [], []
            for sample, reference in zip(samples, clean):
                noisy = sample.cloud.with_positions(
                    sample.cloud.positions + sigma * rng.standard_normal(sample.cloud.positions.shape)
                )
                stats = frame_stability_metrics(reference, AuditService.frames_for(pipeline, noisy, provenance))
                frob.append(stats.frobenius)
                cosines.append(stats.axis_cosines)
            axis = np.mean(cosines, axis=0) if cosines else np.ones(3)
            rows.append(StabilityRow(
                sigma=float(sigma), provenance=provenance, frobenius=float(np.mean(frob)) if frob else 0.0,
                cosine_axis1=float(axis[0]), cosine_axis2=float(axis[1]), cosine_axis3=float(axis[2]),
            ))
            audit_logger.info(f"frame stability ({provenance}) sigma={sigma}: frobenius {rows[-1].frobenius:.4f}")
        return rows

    @staticmethod
    def audit_robustness(
        pipeline: Pipeline, spec: TaskSpec, samples: Sequence[Sample], sigmas: Sequence[float], seed: int = 0
    ) -> list[RobustnessRow]:
        """Task loss and metric on copies of ``samples`` with Gaussian noise of scale sigma on the positions."""
        if any(s < 0 for s in sigmas):
            raise ConfigError("noise scales must be non-negative")
        rng = generator(seed, STREAM_AUDIT, 2)
        rows = []
        for sigma in sigmas:
            noisy = [
                replace(s, cloud=s.cloud.with_positions(s.cloud.positions + sigma * rng.standard_normal(s.cloud.positions.shape)))
                for s in samples
            ]
            loss, metric = TrainingService.evaluate(pipeline, spec, noisy)
            rows.append(RobustnessRow(
                sigma=float(sigma), train_jitter=spec.training.train_jitter, loss=loss, metric=metric,
            ))
            audit_logger.info(f"robustness sigma={sigma}: {metric_name(spec.task)} {metric:.4f}")
        return rows

    @staticmethod
    def audit_report(
        kind: Literal["audit-equivariance", "audit-stability", "audit-robustness"],
        spec: TaskSpec,
        pipeline: Pipeline,
        equivariance: Sequence[AuditRow] = (),
        stability: Sequence[StabilityRow] = (),
        robustness: Sequence[RobustnessRow] = (),
        **arguments,
    ) -> RunReport:
        """RunReport for one audit: its rows, a headline number and the config echo with the audit arguments.

        The headline is the worst deviation, the Frobenius distance at the last sigma, or the task
        metric at the last sigma; an empty table has none.
        """
        if kind == "audit-equivariance":
            name, final = "max_deviation", max((r.max_deviation for r in equivariance), default=None)
        elif kind == "audit-stability":
            name, final = "frobenius", stability[-1].frobenius if stability else None
        else:
            name, final = metric_name(spec.task), robustness[-1].metric if robustness else None
        return RunReport(
            kind=kind,
            task=spec.task,
            metric_name=name,
            final_metric=final,
            parameter_count=pipeline.parameter_count(),
            frame_parameter_count=pipeline.frame_parameter_count,
            equivariance=list(equivariance),
            stability=list(stability),
            robustness=list(robustness),
            config=TrainingService.run_config(spec, audit=arguments),
        )

from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner
from pydantic import ValidationError

from main import cli
from src.core.errors import ConfigError, TrainingDivergence
from src.mp.pipeline import run_pipeline
from src.netcore.tape import Value
from src.schemas.task import DatasetSpec, TaskSpec
from src.services.ablation_service import AblationService
from src.services.audit_service import AuditService
from src.services.dataset_service import (
    SUPERELLIPSOID_AXES,
    SUPERELLIPSOID_EXPONENT,
    TORUS_MAJOR,
    TORUS_MINOR,
    DatasetService,
    part_labels,
    sphere_points,
    superellipsoid_points,
    torus_point,
    torus_points,
)
from src.services.training_service import TrainingService
from tests.conftest import build_task


@pytest.mark.unit
class TestDatasets:
    def test_sphere_normals_are_positions(self, rng):
        points, normals = sphere_points(50, rng)
        np.testing.assert_allclose(np.linalg.norm(points, axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(points, normals)

    def test_torus_normals_match_implicit_gradient(self, rng):
        theta, phi = rng.uniform(0, 2 * np.pi, 30), rng.uniform(0, 2 * np.pi, 30)
        points, normals = torus_point(theta, phi)
        rho = np.linalg.norm(points[:, :2], axis=1)
        np.testing.assert_allclose((rho - TORUS_MAJOR) ** 2 + points[:, 2] ** 2, TORUS_MINOR ** 2, atol=1e-12)
        gradient = np.column_stack([
            2 * (rho - TORUS_MAJOR) * points[:, 0] / rho,
            2 * (rho - TORUS_MAJOR) * points[:, 1] / rho,
            2 * points[:, 2],
        ])
        np.testing.assert_allclose(gradient / np.linalg.norm(gradient, axis=1, keepdims=True), normals, atol=1e-12)
        assert torus_points(25, rng)[0].shape == (25, 3)

    def test_superellipsoid_points_lie_on_the_surface(self, rng):
        points, normals = superellipsoid_points(40, rng)
        level = np.sum(np.abs(points / SUPERELLIPSOID_AXES) ** (2.0 / SUPERELLIPSOID_EXPONENT), axis=1)
        np.testing.assert_allclose(level, 1.0, atol=1e-10)
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-12)
        assert np.all(np.sum(points * normals, axis=1) > 0)

    def test_generation_is_reproducible(self, tmp_path, make_task):
        spec = make_task()
        for name in ("a", "b"):
            DatasetService.write_dataset(DatasetService.gen_dataset(spec), tmp_path / name, spec)
        assert (tmp_path / "a" / "sample_0000.xyz").read_bytes() == (tmp_path / "b" / "sample_0000.xyz").read_bytes()

    def test_pre_rotation_moves_normals_with_points(self, make_task):
        for sample in DatasetService.gen_dataset(make_task()):
            np.testing.assert_allclose(sample.cloud.positions, sample.target, atol=1e-12)
            assert abs(abs(np.linalg.det(sample.rotation)) - 1.0) < 1e-12

    def test_relay_targets(self, make_task):
        spec = make_task("directional-relay", n_points=20, count=2)
        for sample in DatasetService.gen_dataset(spec):
            target = sample.target
            assert target.shape == (20, 3)
            np.testing.assert_allclose(np.linalg.norm(target, axis=1), 1.0, atol=1e-12)
            np.testing.assert_array_equal(target, np.tile(target[0], (20, 1)))
            step = sample.cloud.positions[1] - sample.cloud.positions[0]
            np.testing.assert_allclose(step / np.linalg.norm(step), target[0], atol=1e-12)

    def test_classification_cycles_families(self, make_task):
        samples = DatasetService.gen_dataset(make_task("shape-classification", count=6))
        assert [s.target for s in samples] == [0, 1, 2, 0, 1, 2]
        assert samples[1].family == "torus"

    def test_torus_parts_follow_the_tube_angle(self):
        points, _ = torus_point(np.array([0.0, np.pi, np.pi / 2, -np.pi / 2]), np.array([0.3, 1.2, 2.0, 4.0]))
        np.testing.assert_array_equal(part_labels("torus", points), [0, 1, 2, 2])

    def test_superellipsoid_parts_are_axis_caps(self):
        points = np.array([[1.0, 0.0, 0.0], [0.0, -0.8, 0.0], [0.0, 0.0, 0.6], [0.5, 0.7, 0.1]])
        np.testing.assert_array_equal(part_labels("superellipsoid", points), [0, 1, 2, 1])
        with pytest.raises(ConfigError):
            part_labels("sphere", points)

    @pytest.mark.parametrize("family", ["torus", "superellipsoid"])
    def test_part_labels_survive_pre_rotation(self, make_task, family):
        for sample in DatasetService.gen_dataset(make_task("part-segmentation", family=family)):
            assert sample.target.shape == (32,)
            assert set(sample.target.tolist()) <= {0, 1, 2}
            unrotated = sample.cloud.positions @ sample.rotation
            np.testing.assert_array_equal(sample.target, part_labels(family, unrotated))

    def test_sphere_has_no_parts(self, make_task):
        with pytest.raises(ValidationError):
            make_task("part-segmentation", family="sphere")

    def test_unknown_family(self, rng):
        with pytest.raises(ValidationError):
            TaskSpec(dataset=DatasetSpec(family="cube"))
        with pytest.raises(ConfigError):
            DatasetService.sample_surface("cube", 5, rng)

    def test_split_holds_out_a_quarter(self, make_task):
        samples = DatasetService.gen_dataset(make_task(count=8))
        train, held = DatasetService.split(samples)
        assert len(train) == 6 and len(held) == 2
        train, held = DatasetService.split(samples[:1])
        assert train == held == samples[:1]

    @pytest.mark.parametrize(
        "task", ["normal-regression", "directional-relay", "shape-classification", "part-segmentation"]
    )
    def test_dataset_round_trip(self, tmp_path, make_task, task):
        spec = make_task(task)
        samples = DatasetService.gen_dataset(spec)
        DatasetService.write_dataset(samples, tmp_path, spec)
        loaded_spec, loaded = DatasetService.load_dataset(tmp_path)
        assert loaded_spec == spec
        assert len(loaded) == len(samples)
        for a, b in zip(samples, loaded):
            np.testing.assert_array_equal(a.cloud.positions, b.cloud.positions)
            np.testing.assert_array_equal(np.asarray(a.target), np.asarray(b.target))
            np.testing.assert_array_equal(a.rotation, b.rotation)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ConfigError):
            DatasetService.load_dataset(tmp_path)


@pytest.mark.integration
class TestTraining:
    def test_zero_steps_reports_initial_evaluation(self, make_task):
        run = TrainingService.train(make_task())
        report = run.report
        assert report.steps == 0
        assert len(report.metrics) == 1
        assert report.final_metric == report.metrics[0].metric
        assert -1.0 <= report.final_metric <= 1.0
        assert 0 < report.frame_parameter_count < report.parameter_count
        assert report.metric_name == "cosine_similarity"

    def test_training_is_deterministic(self, make_task):
        spec = make_task(steps=2)
        first, second = TrainingService.train(spec), TrainingService.train(spec)
        assert [m.loss for m in first.report.metrics] == [m.loss for m in second.report.metrics]
        for a, b in zip(first.pipeline.parameters(), second.pipeline.parameters()):
            np.testing.assert_array_equal(a.data, b.data)

    def test_classification_step(self, make_task):
        run = TrainingService.train(make_task("shape-classification", steps=1))
        assert run.report.metric_name == "accuracy"
        assert 0.0 <= run.report.final_metric <= 1.0
        assert len(run.report.metrics) == 2

    def test_segmentation_step(self, make_task):
        run = TrainingService.train(make_task("part-segmentation", steps=1))
        assert run.report.metric_name == "mean_iou"
        assert 0.0 <= run.report.final_metric <= 1.0
        assert run.report.kind == "train"

    def test_nan_loss_raises_divergence(self, make_task, mocker):
        mocker.patch.object(TrainingService, "sample_loss", return_value=Value(np.nan))
        with pytest.raises(TrainingDivergence) as info:
            TrainingService.train(make_task(steps=3))
        assert info.value.step == 0

    def test_empty_sample_list(self, make_task):
        with pytest.raises(ConfigError):
            TrainingService.train(make_task(), samples=[])

    def test_checkpoint_round_trip(self, tmp_path, make_task):
        spec = make_task(steps=1)
        run = TrainingService.train(spec)
        TrainingService.write_outputs(run, spec, tmp_path)
        assert (tmp_path / "metrics.csv").exists()
        assert json.loads((tmp_path / "report.json").read_text())["steps"] == 1

        loaded_spec, pipeline = TrainingService.load_trained(tmp_path)
        assert loaded_spec == spec
        cloud = DatasetService.gen_dataset(spec)[0].cloud
        expected = run_pipeline(run.pipeline.eval(), cloud).values
        np.testing.assert_array_equal(run_pipeline(pipeline.eval(), cloud).values, expected)


@pytest.mark.integration
class TestAudits:
    @pytest.fixture
    def trained(self, make_task):
        spec = make_task()
        return spec, TrainingService.train(spec).pipeline, DatasetService.gen_dataset(spec)[:2]

    def test_no_transforms_no_rows(self, trained):
        _, pipeline, samples = trained
        assert AuditService.audit_equivariance(pipeline, samples, 0) == []

    def test_learned_frames_pass_the_audit(self, trained):
        _, pipeline, samples = trained
        rows = AuditService.audit_equivariance(pipeline, samples, 4, seed=1)
        assert len(rows) == 2 * 5
        assert [r.kind for r in rows[:5]] == ["rotation", "reflection", "rotation", "reflection", "translation"]
        assert rows[1].det == pytest.approx(-1.0)
        assert max(r.max_deviation for r in rows) < 1e-9
        assert pipeline.training

    def test_identity_frames_fail_the_audit(self, make_task):
        spec = make_task().with_overrides(frames="identity")
        pipeline = TrainingService.train(spec).pipeline
        rows = AuditService.audit_equivariance(pipeline, DatasetService.gen_dataset(spec)[:1], 4)
        assert max(r.max_deviation for r in rows if r.kind != "translation") > 1e-6
        assert rows[-1].max_deviation < 1e-10

    def test_stability_without_noise(self, trained):
        _, pipeline, samples = trained
        rows = AuditService.audit_frame_stability(pipeline, samples, [0.0, 0.05])
        assert rows[0].frobenius == pytest.approx(0.0, abs=1e-12)
        assert rows[0].cosine_axis1 == pytest.approx(1.0)
        assert rows[1].frobenius > 0.0
        pca = AuditService.audit_frame_stability(pipeline, samples, [0.0], provenance="pca")
        assert pca[0].provenance == "pca" and pca[0].frobenius == pytest.approx(0.0, abs=1e-12)

    def test_robustness_rows_per_sigma(self, trained):
        spec, pipeline, samples = trained
        rows = AuditService.audit_robustness(pipeline, spec, samples, [0.0, 0.05], seed=3)
        assert [r.sigma for r in rows] == [0.0, 0.05]
        assert all(r.train_jitter == 0.0 for r in rows)
        clean_loss, clean_metric = TrainingService.evaluate(pipeline, spec, samples)
        assert rows[0].loss == pytest.approx(clean_loss, abs=1e-12)
        assert rows[0].metric == pytest.approx(clean_metric, abs=1e-12)
        assert rows[1].metric != rows[0].metric
        with pytest.raises(ConfigError):
            AuditService.audit_robustness(pipeline, spec, samples, [-0.1])

    def test_audit_reports(self, trained):
        spec, pipeline, samples = trained
        rows = AuditService.audit_equivariance(pipeline, samples, 2)
        report = AuditService.audit_report("audit-equivariance", spec, pipeline, equivariance=rows, n_transforms=2)
        assert report.kind == "audit-equivariance" and report.metric_name == "max_deviation"
        assert report.final_metric == max(r.max_deviation for r in rows)
        assert len(report.equivariance) == len(rows) and report.stability == []
        assert report.config["audit"] == {"n_transforms": 2}
        assert report.parameter_count == pipeline.parameter_count()

        stability = AuditService.audit_frame_stability(pipeline, samples, [0.0, 0.02])
        report = AuditService.audit_report("audit-stability", spec, pipeline, stability=stability)
        assert report.final_metric == stability[-1].frobenius

        report = AuditService.audit_report("audit-robustness", spec, pipeline)
        assert report.metric_name == "cosine_similarity" and report.final_metric is None

    def test_stability_needs_learned_or_pca(self, trained, make_task):
        _, pipeline, samples = trained
        with pytest.raises(ConfigError):
            AuditService.audit_frame_stability(pipeline, samples, [0.0], provenance="random")
        spec = make_task().with_overrides(frames="identity")
        with pytest.raises(ConfigError):
            AuditService.audit_frame_stability(TrainingService.train(spec).pipeline, samples, [0.0])


@pytest.mark.integration
class TestComparisons:
    def test_ablation_grid(self, tmp_path, make_task):
        table, pivot = AblationService.ablation_matrix(make_task(steps=1), tmp_path)
        assert len(table) == 4
        assert set(zip(table["frames"], table["mode"])) == {
            ("learned", "tensorial"), ("learned", "scalar"), ("random", "tensorial"), ("random", "scalar"),
        }
        learned = table[table["frames"] == "learned"].iloc[0]
        random = table[table["frames"] == "random"].iloc[0]
        assert learned["parameter_count"] - random["parameter_count"] == learned["frame_parameter_count"]
        assert random["frame_parameter_count"] == 0
        assert list(pivot.columns) == ["frames", "tensorial", "scalar"]
        assert (tmp_path / "ablation.csv").exists() and (tmp_path / "ablation_table.csv").exists()
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["kind"] == "ablation"
        assert [cell["final_metric"] for cell in report["cells"]] == table["final_metric"].tolist()

    def test_sweep(self, tmp_path, make_task):
        spec = make_task(steps=1, count=8)
        table = AblationService.data_efficiency_sweep(spec, [0.5, 1.0], tmp_path)
        assert list(table.columns) == ["fraction", "mode", "final_error", "log_fraction", "log_error"]
        assert table["mode"].tolist() == ["equivariant", "augmented"] * 2
        np.testing.assert_allclose(table["log_fraction"], np.log10(table["fraction"]))
        pd.testing.assert_frame_equal(pd.read_csv(tmp_path / "sweep.csv"), table, check_dtype=False)
        pd.testing.assert_frame_equal(AblationService.data_efficiency_sweep(spec, [0.5, 1.0]), table)
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["kind"] == "sweep" and len(report["cells"]) == 4
        assert report["config"]["fractions"] == [0.5, 1.0]

    def test_robustness_study(self, tmp_path, make_task):
        spec = make_task(steps=1, count=8)
        table = AblationService.robustness_study(spec, [0.0, 0.05], 0.02, tmp_path)
        assert list(table.columns) == ["train_jitter", "sigma", "loss", "metric"]
        assert table["train_jitter"].tolist() == [0.0, 0.0, 0.02, 0.02]
        assert table["sigma"].tolist() == [0.0, 0.05] * 2
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["kind"] == "robustness"
        assert [len(cell["robustness"]) for cell in report["cells"]] == [2, 2]
        assert report["cells"][1]["config"]["training"]["train_jitter"] == 0.02
        pd.testing.assert_frame_equal(pd.read_csv(tmp_path / "robustness.csv"), table, check_dtype=False)

    @pytest.mark.parametrize("sigmas, jitter", [([0.0], 0.0), ([], 0.01), ([-0.1], 0.01)])
    def test_robustness_study_rejects_bad_arguments(self, make_task, sigmas, jitter):
        with pytest.raises(ConfigError):
            AblationService.robustness_study(make_task(), sigmas, jitter)

    @pytest.mark.parametrize("fractions", [[], [0.0], [1.5]])
    def test_sweep_rejects_bad_fractions(self, make_task, fractions):
        with pytest.raises(ConfigError):
            AblationService.data_efficiency_sweep(make_task(), fractions)


@pytest.mark.integration
class TestCli:
    @pytest.fixture
    def config_file(self, tmp_path):
        path = tmp_path / "task.json"
        path.write_text(build_task(steps=1).model_dump_json())
        return path

    def test_generate_train_and_audit(self, tmp_path, config_file):
        runner = CliRunner()
        data, out, audit = tmp_path / "data", tmp_path / "run", tmp_path / "audit"

        result = runner.invoke(cli, ["gen-data", "--config", str(config_file), "--out", str(data)])
        assert result.exit_code == 0, result.output
        assert (data / "dataset.json").exists()

        result = runner.invoke(cli, ["train", "--config", str(config_file), "--data", str(data), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "report.json").exists() and (out / "checkpoint.bin").exists()

        result = runner.invoke(
            cli, ["audit-equivariance", "--checkpoint", str(out), "--data", str(data), "--n-transforms", "2", "--out", str(audit)]
        )
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(audit / "audit.csv")
        assert len(frame) == 4 * 3
        assert frame["max_deviation"].max() < 1e-9

        assert json.loads((audit / "report.json").read_text())["kind"] == "audit-equivariance"
        assert json.loads((data / "report.json").read_text())["kind"] == "gen-data"

        stability = tmp_path / "stability"
        result = runner.invoke(
            cli, ["audit-stability", "--checkpoint", str(out), "--data", str(data), "--sigmas", "0,0.01", "--out", str(stability)]
        )
        assert result.exit_code == 0, result.output
        assert len(pd.read_csv(stability / "stability.csv")) == 2
        report = json.loads((stability / "report.json").read_text())
        assert report["kind"] == "audit-stability" and len(report["stability"]) == 2

        noise = tmp_path / "noise"
        result = runner.invoke(
            cli, ["audit-robustness", "--checkpoint", str(out), "--sigmas", "0,0.02", "--out", str(noise)]
        )
        assert result.exit_code == 0, result.output
        assert pd.read_csv(noise / "robustness.csv")["sigma"].tolist() == [0.0, 0.02]
        report = json.loads((noise / "report.json").read_text())
        assert report["kind"] == "audit-robustness" and report["metric_name"] == "cosine_similarity"

    @pytest.mark.parametrize("command, flag", [
        ("ablate", ["--mode", "scalar"]),
        ("ablate", ["--frames", "learned"]),
        ("ablate", ["--refine"]),
        ("sweep", ["--frames", "learned"]),
    ])
    def test_grid_axes_are_not_options(self, tmp_path, config_file, command, flag):
        result = CliRunner().invoke(cli, [command, "--config", str(config_file), *flag, "--out", str(tmp_path / "o")])
        assert result.exit_code == 2
        assert "No such option" in result.output

    def test_bad_representation_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"pipeline": {"rho_out": "1x1q"}}))
        result = CliRunner().invoke(cli, ["gen-data", "--config", str(path), "--out", str(tmp_path / "d")])
        assert result.exit_code == 2

    def test_bad_sigmas_exit_2(self, tmp_path):
        result = CliRunner().invoke(
            cli, ["audit-stability", "--checkpoint", str(tmp_path), "--sigmas", "a,b", "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2

    def test_divergence_exits_3(self, tmp_path, config_file, mocker):
        mocker.patch.object(TrainingService, "sample_loss", return_value=Value(np.nan))
        result = CliRunner().invoke(cli, ["train", "--config", str(config_file), "--out", str(tmp_path / "run")])
        assert result.exit_code == 3

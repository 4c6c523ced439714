"""
lframes - command-line entry point.

Subcommands generate synthetic datasets, train pipelines, audit equivariance, frame stability and
noise robustness, and run the ablation grid, the data-efficiency sweep and the robustness study.
Every command writes a ``report.json``. Exit codes: 0 success, 2 configuration error, 3 training
divergence.
"""
import json
import sys
from functools import wraps
from pathlib import Path
from typing import Optional

import click
import pandas as pd
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from src.core.config import settings
from src.core.errors import ConfigError, RepSpecParseError, TrainingDivergence
from src.core.logging import log_error
from src.schemas.report import RunReport
from src.schemas.task import TaskSpec
from src.services.ablation_service import AblationService
from src.services.audit_service import AuditService
from src.services.dataset_service import DatasetService
from src.services.training_service import TrainingService
from src.utils.files import atomic_write_csv

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3

console = Console()


def load_task(
    config: Optional[Path],
    seed: Optional[int],
    mode: Optional[str] = None,
    frames: Optional[str] = None,
    refine: Optional[bool] = None,
) -> TaskSpec:
    spec = TaskSpec()
    if config is not None:
        with open(config, encoding="utf-8") as handle:
            spec = TaskSpec.model_validate(json.load(handle))
    return spec.with_overrides(seed=seed, mode=mode, frames=frames, refine=refine)


def parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad {flag} value {text!r}") from exc


def handle_errors(func):
    """Map library errors onto exit codes."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ConfigError, RepSpecParseError, ValidationError, FileNotFoundError) as exc:
            console.print(f"[red]configuration error:[/red] {exc}")
            sys.exit(EXIT_CONFIG)
        except TrainingDivergence as exc:
            console.print(f"[red]{exc}[/red]")
            sys.exit(EXIT_DIVERGENCE)
        except Exception as exc:
            log_error(exc, func.__name__)
            raise
    return wrapper


def render(frame: pd.DataFrame, title: str) -> None:
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.itertuples(index=False):
        table.add_row(*(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    console.print(table)


def _apply(func, options):
    for option in reversed(options):
        func = option(func)
    return func


def config_options(func):
    return _apply(func, [
        click.option("--config", "config", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Task spec JSON."),
        click.option("--seed", type=int, default=None, help="Run seed (overrides the config)."),
    ])


def mode_option(func):
    return click.option("--mode", type=click.Choice(["scalar", "tensorial"]), default=None)(func)


def frames_option(func):
    return click.option(
        "--frames", type=click.Choice(["learned", "pca", "random", "constant", "identity"]), default=None
    )(func)


def refine_option(func):
    return click.option("--refine/--no-refine", default=None, help="Frame refinement after message layers.")(func)


def checkpoint_options(func):
    return _apply(func, [
        click.option("--checkpoint", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True),
        click.option("--data", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None),
    ])


def out_option(func):
    return click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)(func)


def samples_for(spec: TaskSpec, data: Optional[Path]):
    if data is not None:
        _, samples = DatasetService.load_dataset(data)
        return samples
    return DatasetService.gen_dataset(spec)


def report_rows(report: RunReport, out: Path, rows: list, csv_name: str, columns: Optional[list[str]] = None) -> pd.DataFrame:
    frame = pd.DataFrame([r.model_dump() for r in rows], columns=columns)
    atomic_write_csv(out / csv_name, frame)
    TrainingService.write_report(report, out)
    return frame


@click.group()
@click.version_option(settings.APP_VERSION, prog_name=settings.APP_NAME)
def cli():
    """Equivariant message passing with local frames."""


@cli.command("gen-data")
@config_options
@out_option
@handle_errors
def gen_data(config, seed, out):
    """Generate a synthetic dataset."""
    spec = load_task(config, seed)
    samples = DatasetService.gen_dataset(spec)
    DatasetService.write_dataset(samples, out, spec)
    report = RunReport(
        kind="gen-data", task=spec.task, metric_name="samples", final_metric=float(len(samples)), steps=0,
        config=TrainingService.run_config(spec, out=str(out)),
    )
    TrainingService.write_report(report, out)
    console.print(f"wrote {len(samples)} {spec.task} samples to {out}")


@cli.command()
@config_options
@mode_option
@frames_option
@refine_option
@click.option("--data", type=click.Path(exists=True, file_okay=False, path_type=Path), default=None)
@out_option
@handle_errors
def train(config, seed, mode, frames, refine, data, out):
    """Train a pipeline and write report.json, metrics.csv and the checkpoint."""
    spec = load_task(config, seed, mode, frames, refine)
    run = TrainingService.train(spec, samples_for(spec, data))
    TrainingService.write_outputs(run, spec, out)
    render(pd.DataFrame([m.model_dump() for m in run.report.metrics]), f"{spec.task} ({run.report.metric_name})")


@cli.command("audit-equivariance")
@checkpoint_options
@click.option("--n-transforms", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0)
@out_option
@handle_errors
def audit_equivariance(checkpoint, data, n_transforms, seed, out):
    """Compare run(Qx + t) with rho_out(Q) run(x) on random O(3) transforms."""
    spec, pipeline = TrainingService.load_trained(checkpoint)
    rows = AuditService.audit_equivariance(pipeline, samples_for(spec, data), n_transforms, seed)
    report = AuditService.audit_report(
        "audit-equivariance", spec, pipeline, equivariance=rows,
        checkpoint=str(checkpoint), data=str(data) if data else None, n_transforms=n_transforms, seed=seed,
    )
    frame = report_rows(report, out, rows, "audit.csv", ["sample", "transform", "kind", "det", "max_deviation"])
    if not frame.empty:
        render(frame.groupby("kind", as_index=False)["max_deviation"].max(), "worst deviation per transform kind")


@cli.command("audit-stability")
@checkpoint_options
@click.option("--sigmas", default="0,0.005,0.01,0.02,0.05", show_default=True)
@click.option("--frames", type=click.Choice(["learned", "pca"]), default="learned", show_default=True)
@click.option("--seed", type=int, default=0)
@out_option
@handle_errors
def audit_stability(checkpoint, data, sigmas, frames, seed, out):
    """Frame agreement between clean and jittered clouds."""
    levels = parse_floats(sigmas, "--sigmas")
    spec, pipeline = TrainingService.load_trained(checkpoint)
    rows = AuditService.audit_frame_stability(pipeline, samples_for(spec, data), levels, frames, seed)
    report = AuditService.audit_report(
        "audit-stability", spec, pipeline, stability=rows,
        checkpoint=str(checkpoint), data=str(data) if data else None, sigmas=levels, frames=frames, seed=seed,
    )
    render(report_rows(report, out, rows, "stability.csv"), f"frame stability ({frames})")


@cli.command("audit-robustness")
@checkpoint_options
@click.option("--sigmas", default="0,0.005,0.01,0.02,0.05", show_default=True)
@click.option("--seed", type=int, default=0)
@out_option
@handle_errors
def audit_robustness(checkpoint, data, sigmas, seed, out):
    """Task metric of a trained pipeline on evaluation clouds with growing position noise."""
    levels = parse_floats(sigmas, "--sigmas")
    spec, pipeline = TrainingService.load_trained(checkpoint)
    samples = samples_for(spec, data)
    if data is None:
        _, samples = DatasetService.split(samples)
    rows = AuditService.audit_robustness(pipeline, spec, samples, levels, seed)
    report = AuditService.audit_report(
        "audit-robustness", spec, pipeline, robustness=rows,
        checkpoint=str(checkpoint), data=str(data) if data else None, sigmas=levels, seed=seed,
    )
    render(report_rows(report, out, rows, "robustness.csv"), f"robustness ({report.metric_name})")


@cli.command()
@config_options
@out_option
@handle_errors
def ablate(config, seed, out):
    """Train the {learned, random} x {tensorial, scalar} grid."""
    spec = load_task(config, seed)
    _, pivot = AblationService.ablation_matrix(spec, out)
    render(pivot, f"ablation ({spec.task})")


@cli.command()
@config_options
@mode_option
@refine_option
@click.option("--fractions", default="0.25,0.5,1.0", show_default=True)
@out_option
@handle_errors
def sweep(config, seed, mode, refine, fractions, out):
    """Data efficiency of learned frames against augmentation."""
    values = parse_floats(fractions, "--fractions")
    spec = load_task(config, seed, mode, None, refine)
    render(AblationService.data_efficiency_sweep(spec, values, out), "data efficiency")


@cli.command()
@config_options
@mode_option
@frames_option
@refine_option
@click.option("--sigmas", default="0,0.01,0.02,0.05", show_default=True)
@click.option("--jitter", type=float, default=0.01, show_default=True, help="Train-time jitter of the second run.")
@out_option
@handle_errors
def robustness(config, seed, mode, frames, refine, sigmas, jitter, out):
    """Train with and without position jitter and score both under evaluation noise."""
    levels = parse_floats(sigmas, "--sigmas")
    spec = load_task(config, seed, mode, frames, refine)
    render(AblationService.robustness_study(spec, levels, jitter, out), "robustness")


if __name__ == "__main__":
    cli()

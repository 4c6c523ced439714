"""
Run reports and audit tables.
"""
from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

ReportKind = Literal[
    "gen-data", "train", "audit-equivariance", "audit-stability", "audit-robustness", "ablation", "sweep", "robustness"
]


class MetricPoint(BaseModel):
    step: int
    loss: Optional[float] = None
    metric: float
    lr: float = 0.0


class AuditRow(BaseModel):
    """Worst output deviation for one sample under one transform."""
    sample: int
    transform: int
    kind: str
    det: float
    max_deviation: float


class StabilityRow(BaseModel):
    sigma: float
    provenance: str
    frobenius: float
    cosine_axis1: float
    cosine_axis2: float
    cosine_axis3: float


class RobustnessRow(BaseModel):
    """Task metric on evaluation clouds jittered with ``sigma``; targets stay clean."""
    sigma: float
    train_jitter: float
    loss: float
    metric: float


class RunReport(BaseModel):
    kind: ReportKind = "train"
    task: str
    metric_name: str
    metrics: list[MetricPoint] = Field(default_factory=list)
    final_metric: Optional[float] = None
    parameter_count: int = 0
    frame_parameter_count: int = 0
    steps: int = 0
    equivariance: list[AuditRow] = Field(default_factory=list)
    stability: list[StabilityRow] = Field(default_factory=list)
    robustness: list[RobustnessRow] = Field(default_factory=list)
    cells: list["RunReport"] = Field(default_factory=list)
    config: dict[str, Any]
    wall_clock_seconds: float = 0.0

"""
Task specification: what to generate, which pipeline to train and how.
"""
from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

from src.core.config import settings
from src.schemas.pipeline import (
    MessageMode,
    PipelineConfig,
    Provenance,
    classification_config,
    normal_regression_config,
    relay_config,
    segmentation_config,
)

TaskName = Literal["normal-regression", "directional-relay", "shape-classification", "part-segmentation"]
SHAPE_FAMILIES = ("sphere", "torus", "superellipsoid")
# A sphere has no intrinsic regions to label.
SEGMENTATION_FAMILIES = ("torus", "superellipsoid")
PART_COUNT = 3


class DatasetSpec(BaseModel):
    family: str = "sphere"
    n_points: int = Field(128, ge=4)
    noise: float = Field(0.0, ge=0)
    count: int = Field(64, ge=1)
    pre_rotate: bool = True
    path: Optional[str] = None


class TrainingSpec(BaseModel):
    lr: float = Field(3e-3, gt=0)
    steps: int = Field(2000, ge=0)
    warmup: int = Field(100, ge=0)
    clip: float = Field(settings.GRAD_CLIP, gt=0)
    weight_decay: float = Field(1e-4, ge=0)
    betas: tuple[float, float] = (0.9, 0.999)
    seed: int = settings.DEFAULT_SEED
    label_smoothing: float = Field(0.3, ge=0, lt=1)
    eval_every: int = Field(100, ge=1)
    train_jitter: float = Field(0.0, ge=0)


class TaskSpec(BaseModel):
    task: TaskName = "normal-regression"
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    pipeline: Optional[PipelineConfig] = None
    training: TrainingSpec = Field(default_factory=TrainingSpec)
    frames: Optional[Provenance] = None
    mode: Optional[MessageMode] = None
    refine: Optional[bool] = None

    @model_validator(mode="after")
    def check_family(self) -> "TaskSpec":
        if self.task == "part-segmentation":
            if self.dataset.family not in SEGMENTATION_FAMILIES:
                raise ValueError(
                    f"part segmentation needs a family with labelled regions; choose from {', '.join(SEGMENTATION_FAMILIES)}"
                )
        elif self.task != "directional-relay" and self.dataset.family not in SHAPE_FAMILIES:
            raise ValueError(f"unknown shape family {self.dataset.family!r}; choose from {', '.join(SHAPE_FAMILIES)}")
        return self

    @property
    def seed(self) -> int:
        return self.training.seed

    @property
    def is_labelled(self) -> bool:
        """Integer targets scored with cross-entropy."""
        return self.task in ("shape-classification", "part-segmentation")

    def resolved_pipeline(self) -> PipelineConfig:
        """The pipeline to build: the explicit one or the task preset, with the switches applied."""
        if self.pipeline is not None:
            base = self.pipeline
        elif self.task == "directional-relay":
            base = relay_config()
        elif self.task == "shape-classification":
            base = classification_config(len(SHAPE_FAMILIES))
        elif self.task == "part-segmentation":
            base = segmentation_config(PART_COUNT)
        else:
            base = normal_regression_config()
        return base.with_overrides(frames=self.frames, mode=self.mode, refine=self.refine)

    def with_overrides(self, **changes) -> "TaskSpec":
        """Copy with top-level fields (and ``seed``, ``train_jitter``) replaced; ``None`` values are ignored."""
        data = self.model_dump()
        for key in ("seed", "train_jitter"):
            value = changes.pop(key, None)
            if value is not None:
                data["training"][key] = value
        data.update({k: v for k, v in changes.items() if v is not None})
        return TaskSpec.model_validate(data)

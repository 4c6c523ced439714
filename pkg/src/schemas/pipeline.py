"""
Pipeline configuration documents.
"""
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator

from src.core.config import settings
from src.reps.spec import parse_rep_spec

MessageMode = Literal["scalar", "tensorial"]
Provenance = Literal["learned", "pca", "random", "constant", "identity"]
Aggregation = Literal["max", "sum", "mean"]

DESK_REP = "16x0n+4x0p+4x1n+1x1p+1x2n"


def _canonical_rep(value: Optional[str]) -> Optional[str]:
    return None if value is None else str(parse_rep_spec(value))


class FrameConfig(BaseModel):
    provenance: Provenance = "learned"
    radius: float = Field(0.5, gt=0)
    hidden: list[int] = Field(default_factory=lambda: [32, 32])
    envelope_p: int = Field(settings.ENVELOPE_P, ge=1)
    group: Literal["SO(d)", "O(d)"] = "O(d)"


class LayerConfig(BaseModel):
    """One layer; ``rep`` is the representation of the layer's output features."""
    type: Literal["encoder", "decoder", "message", "pool"]
    rep: Optional[str] = None
    hidden: list[int] = Field(default_factory=lambda: [32])
    radius: Optional[float] = Field(None, gt=0)
    fraction: float = Field(1.0, gt=0, le=1)
    refine: bool = False
    mode: Optional[MessageMode] = None
    aggregation: Aggregation = "max"

    @field_validator("rep")
    @classmethod
    def validate_rep(cls, v: Optional[str]) -> Optional[str]:
        return _canonical_rep(v)


class HeadConfig(BaseModel):
    hidden: list[int] = Field(default_factory=lambda: [32])
    dropout: float = Field(0.0, ge=0, lt=1)
    normalize: bool = False


class PipelineConfig(BaseModel):
    rho_in: Optional[str] = None
    rho_out: str = "1x1n"
    mode: MessageMode = "tensorial"
    radial_k: int = Field(settings.RADIAL_K, ge=2)
    frames: FrameConfig = Field(default_factory=FrameConfig)
    layers: list[LayerConfig] = Field(default_factory=list)
    head: Optional[HeadConfig] = Field(default_factory=HeadConfig)
    anchor: Literal["closest", "farthest"] = "closest"

    @field_validator("rho_in", "rho_out")
    @classmethod
    def validate_reps(cls, v: Optional[str]) -> Optional[str]:
        return _canonical_rep(v)

    def with_overrides(
        self,
        frames: Optional[Provenance] = None,
        mode: Optional[MessageMode] = None,
        refine: Optional[bool] = None,
    ) -> "PipelineConfig":
        """Copy with the CLI switches applied: frame provenance, message mode on every layer, refinement."""
        data = self.model_dump()
        if frames is not None:
            data["frames"]["provenance"] = frames
        if mode is not None:
            data["mode"] = mode
            for layer in data["layers"]:
                layer["mode"] = None
        if refine is not None:
            for layer in data["layers"]:
                if layer["type"] in ("encoder", "decoder", "message"):
                    layer["refine"] = refine
        return PipelineConfig.model_validate(data)


def normal_regression_config(rep: str = DESK_REP) -> PipelineConfig:
    """Two encoder levels, two decoders back to full resolution, unit-vector head."""
    return PipelineConfig(
        rho_out="1x1n",
        frames=FrameConfig(radius=0.5),
        layers=[
            LayerConfig(type="encoder", rep=rep, radius=0.5, fraction=0.5, refine=True),
            LayerConfig(type="encoder", rep=rep, radius=0.8, fraction=0.5, refine=True),
            LayerConfig(type="decoder", rep=rep),
            LayerConfig(type="decoder", rep=rep),
        ],
        head=HeadConfig(hidden=[32], normalize=True),
    )


def relay_config(rep: str = DESK_REP) -> PipelineConfig:
    """Full-resolution message layers so direction information hops node to node."""
    return PipelineConfig(
        rho_out="1x1n",
        frames=FrameConfig(radius=0.35),
        layers=[
            LayerConfig(type="message", rep=rep, radius=0.35),
            LayerConfig(type="message", rep=rep, radius=0.35),
            LayerConfig(type="message", rep=rep, radius=0.35),
        ],
        head=HeadConfig(hidden=[32], normalize=True),
    )


def segmentation_config(num_parts: int, rep: str = DESK_REP) -> PipelineConfig:
    """The normal-regression layout with per-node part logits instead of unit vectors."""
    return PipelineConfig(
        rho_out=f"{num_parts}x0n",
        frames=FrameConfig(radius=0.5),
        layers=[
            LayerConfig(type="encoder", rep=rep, radius=0.5, fraction=0.5, refine=True),
            LayerConfig(type="encoder", rep=rep, radius=0.8, fraction=0.5, refine=True),
            LayerConfig(type="decoder", rep=rep),
            LayerConfig(type="decoder", rep=rep),
        ],
        head=HeadConfig(hidden=[32]),
    )


def classification_config(num_classes: int, rep: str = DESK_REP) -> PipelineConfig:
    return PipelineConfig(
        rho_out=f"{num_classes}x0n",
        frames=FrameConfig(radius=0.5),
        layers=[
            LayerConfig(type="encoder", rep=rep, radius=0.5, fraction=0.5),
            LayerConfig(type="encoder", rep=rep, radius=0.9, fraction=0.25),
            LayerConfig(type="pool", rep=rep),
        ],
        head=HeadConfig(hidden=[32], dropout=0.5),
    )

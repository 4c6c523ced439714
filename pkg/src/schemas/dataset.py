"""
Sidecar header of a point-cloud text file.
"""
from typing import Optional, Union

from pydantic import BaseModel, Field, field_validator

from src.reps.spec import parse_rep_spec


class FeatureColumn(BaseModel):
    """A feature block stored as extra columns after positions (and normals)."""
    name: str
    rep: str

    @field_validator("rep")
    @classmethod
    def validate_rep(cls, v: str) -> str:
        return str(parse_rep_spec(v))


class CloudHeader(BaseModel):
    num_nodes: int = Field(..., ge=1)
    dim: int = 3
    has_normals: bool = False
    features: list[FeatureColumn] = Field(default_factory=list)
    family: Optional[str] = None
    target: Optional[Union[int, list[float]]] = None
    labels: Optional[list[int]] = None
    rotation: Optional[list[list[float]]] = None
    noise: float = 0.0

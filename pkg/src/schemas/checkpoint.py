"""
Checkpoint manifest schema.
"""
from typing import Any, Optional

from pydantic import BaseModel, Field


class TensorEntry(BaseModel):
    """One array in the flat binary, in file order."""
    name: str
    shape: list[int]
    kind: str = Field("parameter", pattern="^(parameter|buffer)$")


class CheckpointManifest(BaseModel):
    """JSON companion of ``checkpoint.bin`` (little-endian float64, entries concatenated)."""
    format: str = "lframes-checkpoint/1"
    dtype: str = "<f8"
    entries: list[TensorEntry]
    seed: int
    step: int = 0
    config: Optional[dict[str, Any]] = None
    task: Optional[dict[str, Any]] = None

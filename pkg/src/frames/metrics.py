"""
Agreement between two frame sets over the same nodes.
"""
from dataclasses import dataclass

import numpy as np

from src.core.errors import ContractViolation
from src.frames.builders import FrameSet


@dataclass(frozen=True)
class FrameStability:
    frobenius: float
    axis_cosines: tuple[float, ...]


def frame_stability_metrics(frames_a: FrameSet, frames_b: FrameSet) -> FrameStability:
    """Mean Frobenius distance, and per axis the mean cosine between corresponding rows."""
    a, b = frames_a.frames, frames_b.frames
    if a.shape != b.shape:
        raise ContractViolation(f"frame sets of shapes {a.shape} and {b.shape} cannot be compared")
    frobenius = float(np.mean(np.linalg.norm(a - b, axis=(1, 2))))
    cosines = np.mean(np.sum(a * b, axis=2), axis=0)
    return FrameStability(frobenius=frobenius, axis_cosines=tuple(float(c) for c in cosines))

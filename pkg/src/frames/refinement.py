"""
Frame refinement between message-passing layers.

A small MLP reads the invariant features of a node and predicts two vectors in its local frame.
Gram-Schmidt plus a cross product (no handedness flip) turn them into U in SO(3); the frame becomes
U R and the features are re-expressed as rho(U) f.
"""
from typing import Optional, Sequence

import numpy as np

from src.core.errors import ContractViolation
from src.frames.builders import FrameSet
from src.frames.gram_schmidt import assemble_frames, orthonormal_pairs, seeded_directions
from src.netcore import tape as T
from src.netcore.layers import Mlp, Module
from src.netcore.tape import Value
from src.reps.representation import FeatureBlock, transform
from src.reps.spec import RepSpec

IDENTITY_OUTPUT = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)


class FrameRefiner(Module):
    def __init__(self, width: int, rng: np.random.Generator, hidden: Sequence[int] = (32,)):
        self.mlp = Mlp([width, *hidden, 6], rng, final_bias=IDENTITY_OUTPUT)

    def __call__(self, features: T.ValueLike) -> Value:
        return self.mlp(features)


def rotations_from_outputs(outputs: T.ValueLike, seed: int = 0) -> Value:
    """(N, 6) network outputs -> (N, 3, 3) proper rotations."""
    outputs = T.as_value(outputs)
    if outputs.ndim != 2 or outputs.shape[1] != 6:
        raise ContractViolation(f"refinement expects (N, 6) outputs, got {outputs.shape}")
    n1, n2 = orthonormal_pairs(outputs[:, 0:3], outputs[:, 3:6], seeded_directions(seed), context="refinement")
    return assemble_frames(n1, n2, None)


def apply_refinement(
    frames: T.ValueLike, features: T.ValueLike, spec: RepSpec, refiner: FrameRefiner, seed: int = 0
) -> tuple[Value, Value, Value]:
    """Returns (U R, rho(U) f, U)."""
    U = rotations_from_outputs(refiner(features), seed)
    refined = T.einsum("nab,nbc->nac", U, frames)
    return refined, transform(spec, U, features), U


def refine_frames(
    frames: FrameSet, features: FeatureBlock, refine_mlp: FrameRefiner, seed: int = 0
) -> tuple[FrameSet, FeatureBlock]:
    if features.num_nodes != frames.num_nodes:
        raise ContractViolation(f"{features.num_nodes} feature rows for {frames.num_nodes} frames")
    refined, re_expressed, _ = apply_refinement(frames.frames, features.values, features.spec, refine_mlp, seed)
    return (
        FrameSet(frames=refined.data, provenance=frames.provenance),
        FeatureBlock(values=re_expressed.data, spec=features.spec),
    )

"""
Moving features between the global frame and the per-node local frames.
"""
from typing import Optional

from src.core.errors import ContractViolation
from src.frames.builders import FrameSet
from src.geometry.point_cloud import PointCloud
from src.netcore import tape as T
from src.netcore.tape import Value
from src.reps.representation import FeatureBlock, transform
from src.reps.spec import RepSpec


def to_local(spec: Optional[RepSpec], frames: T.ValueLike, features: T.ValueLike) -> Value:
    """rho(R_i) F_i row by row; a missing spec means zero-width features."""
    features = T.as_value(features)
    if spec is None:
        if features.shape[-1] != 0:
            raise ContractViolation(f"features of width {features.shape[-1]} need a representation")
        return features
    return transform(spec, frames, features)


def to_global(spec: RepSpec, frames: T.ValueLike, features: T.ValueLike) -> Value:
    """rho(R_i^T) f_i row by row."""
    return transform(spec, T.swapaxes(T.as_value(frames), -1, -2), features)


def canonicalize_in(cloud: PointCloud, frames: FrameSet, rho_in: Optional[RepSpec]) -> Optional[FeatureBlock]:
    _, values = cloud.stacked_features()
    width = 0 if rho_in is None else rho_in.width
    if values.shape[1] != width:
        raise ContractViolation(f"raw features have width {values.shape[1]}, {rho_in} needs {width}")
    if rho_in is None:
        return None
    return FeatureBlock(values=to_local(rho_in, frames.frames, values).data, spec=rho_in)


def decanonicalize_out(features: FeatureBlock, frames: FrameSet, rho_out: RepSpec) -> FeatureBlock:
    if features.spec.width != rho_out.width:
        raise ContractViolation(f"features of width {features.spec.width} cannot be read as {rho_out}")
    if features.num_nodes != frames.num_nodes:
        raise ContractViolation(f"{features.num_nodes} feature rows for {frames.num_nodes} frames")
    return FeatureBlock(values=to_global(rho_out, frames.frames, features.values).data, spec=rho_out)


def normalize_vectors(spec: RepSpec, values: T.ValueLike) -> Value:
    """Scale every order-1 copy to unit length; other channels pass through."""
    values = T.as_value(values)
    rows = values.shape[0]
    parts = []
    for term, cols in spec.term_slices():
        segment = values[:, cols]
        if term.order == 1:
            d = spec.dim_space
            vecs = T.reshape(segment, (rows, term.multiplicity, d))
            lengths = T.sqrt(T.vsum(vecs * vecs, axis=-1, keepdims=True) + 1e-24)
            segment = T.reshape(vecs * T.reciprocal(lengths), (rows, term.multiplicity * d))
        parts.append(segment)
    return T.concatenate(parts, axis=-1) if len(parts) > 1 else parts[0]

"""
Message passing between local frames.

Every node holds invariant features expressed in its own frame R_i. A message from j to i is
phi(f_i, T(f_j), radial(|x_i - x_j|), R_i u_ij) with u_ij a unit edge direction. In tensorial mode
T(f_j) = rho(R_i R_j^T) f_j re-expresses the neighbour's features in the receiver's frame; in scalar
mode T is the identity. Both modes see the same rotated edge direction, so the neighbour-feature
transform is the only difference between them.
"""
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from src.core.config import settings
from src.core.errors import ContractViolation
from src.frames.refinement import FrameRefiner, apply_refinement
from src.geometry.embeddings import gaussian_radial_embedding
from src.geometry.graph import Graph, radius_graph
from src.netcore import tape as T
from src.netcore.layers import Mlp, Module
from src.netcore.tape import Value
from src.reps.representation import transform
from src.reps.spec import RepSpec

LayerKind = Literal["encoder", "decoder", "message", "pool"]


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    rep_in: Optional[RepSpec]
    rep_out: RepSpec
    hidden: tuple[int, ...] = (32,)
    radius: Optional[float] = None
    fraction: float = 1.0
    aggregation: Literal["max", "sum", "mean"] = "max"
    refine: bool = False
    mode: Literal["scalar", "tensorial"] = "tensorial"
    radial_k: int = settings.RADIAL_K
    include_self: bool = True
    skip_rep: Optional[RepSpec] = None
    dim: int = 3

    @property
    def in_width(self) -> int:
        return 0 if self.rep_in is None else self.rep_in.width

    @property
    def out_width(self) -> int:
        return self.rep_out.width

    @property
    def skip_width(self) -> int:
        return 0 if self.skip_rep is None else self.skip_rep.width

    @property
    def message_input_width(self) -> int:
        self_width = self.in_width if self.include_self else 0
        return self_width + self.in_width + self.radial_k + self.dim

    @property
    def update_input_width(self) -> int:
        return self.in_width + self.out_width


@dataclass
class LevelState:
    """Nodes of one resolution level with their frames and local-frame features."""
    indices: np.ndarray
    positions: np.ndarray
    frames: Value
    features: Value
    spec: Optional[RepSpec]

    @property
    def num_nodes(self) -> int:
        return int(self.positions.shape[0])


@dataclass
class PipelineState:
    """Stack of levels; encoders push, decoders pop back into the cached level below."""
    levels: list[LevelState]
    seed: int = settings.DEFAULT_SEED
    refinements: list[np.ndarray] = field(default_factory=list)
    anchor: Optional[int] = None

    @property
    def top(self) -> LevelState:
        return self.levels[-1]


class MessageBlock(Module):
    """phi, psi and the optional refinement network of one message-passing layer."""

    def __init__(self, layer: LayerSpec, rng: np.random.Generator):
        self.phi = Mlp([layer.message_input_width, *layer.hidden, layer.out_width], rng, norm=True)
        self.psi = (
            Mlp([layer.update_input_width, *layer.hidden, layer.out_width], rng, norm=True)
            if layer.kind != "pool" else None
        )
        self.refiner = FrameRefiner(layer.out_width, rng) if layer.refine else None


def edge_messages(
    layer: LayerSpec,
    phi: Mlp,
    graph: Graph,
    source_frames: T.ValueLike,
    source_features: T.ValueLike,
    target_frames: T.ValueLike,
    target_features: Optional[T.ValueLike],
    directions: np.ndarray,
    radial_max: float,
) -> Value:
    """Per-edge messages; edge e carries information from ``senders[e]`` to ``receivers[e]``."""
    recv, send = graph.receivers, graph.senders
    R_i = T.as_value(target_frames)[recv]
    parts = []
    if layer.in_width:
        if layer.include_self:
            if target_features is None:
                raise ContractViolation("this layer needs the receiver's own features")
            parts.append(T.as_value(target_features)[recv])
        f_j = T.as_value(source_features)[send]
        if f_j.shape[-1] != layer.in_width:
            raise ContractViolation(f"neighbour features of width {f_j.shape[-1]}, layer expects {layer.in_width}")
        if layer.mode == "tensorial":
            relative = T.einsum("eab,ecb->eac", R_i, T.as_value(source_frames)[send])
            f_j = transform(layer.rep_in, relative, f_j)
        parts.append(f_j)
    parts.append(gaussian_radial_embedding(graph.distances, layer.radial_k, radial_max))
    parts.append(T.einsum("eab,eb->ea", R_i, directions))
    return phi(T.concatenate(parts, axis=-1))


def aggregate(messages: T.ValueLike, receivers: np.ndarray, num_nodes: int, how: str = "max") -> Value:
    """Reduce messages per receiver; nodes without messages get zeros."""
    if how == "max":
        return T.segment_max(messages, receivers, num_nodes)
    summed = T.segment_sum(messages, receivers, num_nodes)
    if how == "sum":
        return summed
    if how == "mean":
        counts = np.maximum(np.bincount(receivers, minlength=num_nodes), 1)[:, None]
        return summed * (1.0 / counts)
    raise ContractViolation(f"unknown aggregation {how!r}")


def update_features(psi: Mlp, own: T.ValueLike, aggregated: Value) -> Value:
    own = T.as_value(own)
    inputs = T.concatenate([own, aggregated], axis=-1) if own.shape[-1] else aggregated
    return psi(inputs)


def maybe_refine(
    state: PipelineState, frames: Value, features: Value, layer: LayerSpec, refiner: Optional[FrameRefiner]
) -> tuple[Value, Value]:
    if refiner is None:
        return frames, features
    frames, features, U = apply_refinement(frames, features, layer.rep_out, refiner, state.seed)
    state.refinements.append(U.data)
    return frames, features


def message_layer(state: PipelineState, layer: LayerSpec, block: MessageBlock) -> PipelineState:
    """One layer on the current level: radius graph, messages, aggregation, update."""
    if layer.radius is None:
        raise ContractViolation("message layers need a neighbourhood radius")
    level = state.top
    graph = radius_graph(level.positions, layer.radius)
    inward = -graph.vectors / graph.distances[:, None]
    messages = edge_messages(
        layer, block.phi, graph, level.frames, level.features, level.frames, level.features, inward, layer.radius
    )
    aggregated = aggregate(messages, graph.receivers, level.num_nodes, layer.aggregation)
    features = update_features(block.psi, level.features, aggregated)
    frames, features = maybe_refine(state, level.frames, features, layer, block.refiner)
    state.levels[-1] = LevelState(
        indices=level.indices, positions=level.positions, frames=frames, features=features, spec=layer.rep_out
    )
    return state

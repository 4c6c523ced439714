"""
PointNet++-style levels built from frame-aware messages: subsampling encoders, inverse-distance
decoders with skip connections, and global pooling at an anchor node.
"""
from typing import Literal

import numpy as np

from src.core.config import settings
from src.core.logging import log_degeneracy
from src.frames.refinement import FrameRefiner
from src.geometry.graph import Graph, radius_neighbors, star_graph
from src.geometry.sampling import (
    cloud_extent,
    farthest_point_sampling,
    subsample_count,
    tied_argmax,
    tied_argmin,
)
from src.mp.message import (
    LayerSpec,
    LevelState,
    MessageBlock,
    PipelineState,
    aggregate,
    edge_messages,
    maybe_refine,
    update_features,
)
from src.netcore import tape as T
from src.netcore.layers import Mlp, Module
from src.reps.representation import transform

NEIGHBORS = 3


class DecoderBlock(Module):
    def __init__(self, layer: LayerSpec, rng: np.random.Generator):
        self.mlp = Mlp([layer.in_width + layer.skip_width, *layer.hidden, layer.out_width], rng, norm=True)
        self.refiner = FrameRefiner(layer.out_width, rng) if layer.refine else None


def encoder_layer(state: PipelineState, layer: LayerSpec, block: MessageBlock) -> PipelineState:
    """Subsample centres with FPS, gather messages from the level's nodes within the radius, max-pool."""
    previous = state.top
    count = subsample_count(previous.num_nodes, layer.fraction)
    centers = farthest_point_sampling(previous.positions, count, start=0)
    graph = radius_neighbors(previous.positions[centers], previous.positions, layer.radius, center_ids=centers)
    empty = int(np.sum(graph.degree() == 0))
    if empty:
        log_degeneracy("empty encoder neighbourhood", empty, f"radius {layer.radius}")

    frames = previous.frames[centers]
    own = previous.features[centers]
    outward = graph.vectors / graph.distances[:, None]
    messages = edge_messages(
        layer, block.phi, graph, previous.frames, previous.features, frames, own, outward, layer.radius
    )
    aggregated = aggregate(messages, graph.receivers, count, "max")
    features = update_features(block.psi, own, aggregated)
    frames, features = maybe_refine(state, frames, features, layer, block.refiner)
    state.levels.append(
        LevelState(
            indices=previous.indices[centers],
            positions=previous.positions[centers],
            frames=frames,
            features=features,
            spec=layer.rep_out,
        )
    )
    return state


def interpolation_weights(targets: np.ndarray, sources: np.ndarray, k: int = NEIGHBORS) -> tuple[np.ndarray, np.ndarray]:
    """Indices (M, k) of the nearest sources per target and their normalised inverse-distance weights."""
    k = min(k, sources.shape[0])
    dist = np.linalg.norm(targets[:, None, :] - sources[None, :, :], axis=-1)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
    inverse = 1.0 / np.maximum(np.take_along_axis(dist, nearest, axis=1), settings.DIST_EPS)
    return nearest, inverse / inverse.sum(axis=1, keepdims=True)


def decoder_layer(state: PipelineState, layer: LayerSpec, block: DecoderBlock) -> PipelineState:
    """Interpolate the top level onto the cached level below and merge with its encoder features."""
    source = state.levels.pop()
    target = state.top
    nearest, weights = interpolation_weights(target.positions, source.positions)
    k = nearest.shape[1]
    recv = np.repeat(np.arange(target.num_nodes), k)
    send = nearest.reshape(-1)

    if layer.in_width:
        gathered = source.features[send]
        if layer.mode == "tensorial":
            relative = T.einsum("eab,ecb->eac", target.frames[recv], source.frames[send])
            gathered = transform(layer.rep_in, relative, gathered)
        interpolated = T.segment_sum(gathered * weights.reshape(-1, 1), recv, target.num_nodes)
    else:
        interpolated = T.as_value(np.zeros((target.num_nodes, 0)))
    parts = [interpolated] + ([target.features] if layer.skip_width else [])
    features = block.mlp(T.concatenate(parts, axis=-1) if len(parts) > 1 else parts[0])
    frames, features = maybe_refine(state, target.frames, features, layer, block.refiner)
    state.levels[-1] = LevelState(
        indices=target.indices, positions=target.positions, frames=frames, features=features, spec=layer.rep_out
    )
    return state


def select_anchor(positions: np.ndarray, mode: Literal["closest", "farthest"] = "closest") -> int:
    """Node closest to (or farthest from) the mean position; ties go to the lowest index."""
    dist = np.linalg.norm(positions - positions.mean(axis=0), axis=1)
    tol = settings.TIE_RTOL * cloud_extent(positions)
    return tied_argmin(dist, tol) if mode == "closest" else tied_argmax(dist, tol)


def global_pool(
    state: PipelineState, layer: LayerSpec, block: MessageBlock, anchor_mode: Literal["closest", "farthest"] = "closest"
) -> PipelineState:
    """Max over messages from every other node to the anchor, expressed in the anchor's frame."""
    level = state.top
    anchor = select_anchor(level.positions, anchor_mode)
    graph: Graph = star_graph(level.positions, anchor)
    if graph.num_edges == 0:
        log_degeneracy("global pool over a single node", 1)
    radial_max = layer.radius or (float(graph.distances.max()) if graph.num_edges else 1.0)
    radial_max = radial_max if radial_max > 0 else 1.0
    frames = level.frames[anchor:anchor + 1]
    outward = graph.vectors / graph.distances[:, None]
    own = level.features[anchor:anchor + 1]
    messages = edge_messages(
        layer, block.phi, graph, level.frames, level.features, frames, own, outward, radial_max
    )
    pooled = aggregate(messages, graph.receivers, 1, "max")
    state.anchor = int(level.indices[anchor])
    state.levels.append(
        LevelState(
            indices=level.indices[anchor:anchor + 1],
            positions=level.positions[anchor:anchor + 1],
            frames=frames,
            features=pooled,
            spec=layer.rep_out,
        )
    )
    return state

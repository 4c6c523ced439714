"""
End-to-end equivariant pipeline: frames -> local coordinates -> layers -> head -> global frame.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.core.config import settings
from src.core.errors import ContractViolation, PipelineConfigError
from src.frames.builders import (
    FrameNet,
    FrameProvenance,
    build_pca_frames,
    build_random_frames,
    learned_frames,
)
from src.geometry.graph import radius_graph
from src.geometry.point_cloud import PointCloud
from src.mp.canonical import normalize_vectors, to_global, to_local
from src.mp.message import LayerSpec, LevelState, MessageBlock, PipelineState, message_layer
from src.mp.pointnet import DecoderBlock, decoder_layer, encoder_layer, global_pool
from src.netcore import tape as T
from src.netcore.layers import Mlp, Module
from src.netcore.tape import Value
from src.reps.representation import FeatureBlock, random_orthogonal
from src.reps.spec import RepSpec, parse_rep_spec
from src.schemas.pipeline import PipelineConfig
from src.utils.rng import STREAM_FRAMES, STREAM_INIT, generator


def resolve_layers(config: PipelineConfig) -> list[LayerSpec]:
    """Chain representations through the layers and check that the stack of levels balances."""
    current = parse_rep_spec(config.rho_in) if config.rho_in else None
    cached: list[Optional[RepSpec]] = []
    pooled = False
    specs = []
    for index, layer in enumerate(config.layers):
        if pooled:
            raise PipelineConfigError("no layer may follow the global pool", index)
        if layer.rep is None:
            raise PipelineConfigError(f"{layer.type} layer needs an output rep", index)
        rep_out = parse_rep_spec(layer.rep)
        common = dict(
            rep_in=current, rep_out=rep_out, hidden=tuple(layer.hidden), mode=layer.mode or config.mode,
            radial_k=config.radial_k,
        )
        if layer.type in ("encoder", "message") and layer.radius is None:
            raise PipelineConfigError(f"{layer.type} layer needs a radius", index)
        if layer.type == "encoder":
            cached.append(current)
            spec = LayerSpec(
                kind="encoder", radius=layer.radius, fraction=layer.fraction, aggregation="max",
                refine=layer.refine, **common,
            )
        elif layer.type == "message":
            spec = LayerSpec(
                kind="message", radius=layer.radius, aggregation=layer.aggregation, refine=layer.refine,
                **common,
            )
        elif layer.type == "decoder":
            if not cached:
                raise PipelineConfigError("decoder has no encoder level to return to", index)
            spec = LayerSpec(kind="decoder", refine=layer.refine, skip_rep=cached.pop(), **common)
        else:
            if layer.refine:
                raise PipelineConfigError("the global pool cannot refine frames", index)
            pooled = True
            spec = LayerSpec(kind="pool", radius=layer.radius, aggregation="max", **common)
        specs.append(spec)
        current = rep_out
    if cached and not pooled:
        raise PipelineConfigError(
            f"{len(cached)} encoder level(s) never decoded; per-node output needs one decoder per encoder",
            len(config.layers) - 1,
        )
    return specs


@dataclass
class PipelineResult:
    output: Value
    frames: np.ndarray
    refinements: list[np.ndarray] = field(default_factory=list)
    anchor: Optional[int] = None


class Pipeline(Module):
    def __init__(self, config: PipelineConfig, seed: int = settings.DEFAULT_SEED):
        self.config = config
        self.seed = seed
        self.provenance = FrameProvenance(config.frames.provenance)
        self.rho_in = parse_rep_spec(config.rho_in) if config.rho_in else None
        self.rho_out = parse_rep_spec(config.rho_out)
        self.layer_specs = resolve_layers(config)
        rng = generator(seed, STREAM_INIT)

        self.scalar_mask = self.rho_in.even_scalar_mask() if self.rho_in else np.zeros(0, dtype=bool)
        self.frame_net = (
            FrameNet(
                int(self.scalar_mask.sum()), config.frames.radius, rng,
                hidden=config.frames.hidden, radial_k=config.radial_k, envelope_p=config.frames.envelope_p,
            )
            if self.provenance is FrameProvenance.LEARNED else None
        )
        self.blocks = [
            DecoderBlock(spec, rng) if spec.kind == "decoder" else MessageBlock(spec, rng)
            for spec in self.layer_specs
        ]
        last = self.layer_specs[-1].rep_out if self.layer_specs else self.rho_in
        last_width = 0 if last is None else last.width
        if config.head is not None:
            self.head = Mlp(
                [last_width, *config.head.hidden, self.rho_out.width], rng, dropout=config.head.dropout
            )
        else:
            self.head = None
            if last != self.rho_out:
                raise PipelineConfigError(f"without a head the last representation {last} must equal {self.rho_out}")

    @property
    def frame_parameter_count(self) -> int:
        return 0 if self.frame_net is None else self.frame_net.parameter_count()

    def raw_features(self, cloud: PointCloud) -> np.ndarray:
        _, values = cloud.stacked_features()
        expected = 0 if self.rho_in is None else self.rho_in.width
        if values.shape[1] != expected:
            raise ContractViolation(f"cloud features have width {values.shape[1]}, pipeline expects {expected}")
        return values

    def initial_frames(
        self,
        cloud: PointCloud,
        raw: np.ndarray,
        frame_rng: Optional[np.random.Generator] = None,
        constant_frame: Optional[np.ndarray] = None,
    ) -> Value:
        n, d = cloud.num_nodes, cloud.dim
        frames_config = self.config.frames
        if self.provenance is FrameProvenance.LEARNED:
            graph = radius_graph(cloud, frames_config.radius)
            return learned_frames(graph, self.frame_net, raw[:, self.scalar_mask], self.seed)
        if self.provenance is FrameProvenance.PCA:
            return Value(build_pca_frames(cloud, radius_graph(cloud, frames_config.radius)).frames)
        rng = frame_rng or generator(self.seed, STREAM_FRAMES)
        if self.provenance is FrameProvenance.RANDOM:
            return Value(build_random_frames(n, rng, frames_config.group, d).frames)
        if self.provenance is FrameProvenance.CONSTANT:
            R = constant_frame if constant_frame is not None else random_orthogonal(rng, frames_config.group, d)
            return Value(np.broadcast_to(np.asarray(R, dtype=np.float64), (n, d, d)).copy())
        return Value(np.broadcast_to(np.eye(d), (n, d, d)).copy())

    def forward(
        self,
        cloud: PointCloud,
        frame_rng: Optional[np.random.Generator] = None,
        constant_frame: Optional[np.ndarray] = None,
        frames: Optional[np.ndarray] = None,
    ) -> PipelineResult:
        """Run on one cloud. ``frames`` overrides frame construction entirely."""
        raw = self.raw_features(cloud)
        R = Value(frames) if frames is not None else self.initial_frames(cloud, raw, frame_rng, constant_frame)
        state = PipelineState(
            levels=[
                LevelState(
                    indices=np.arange(cloud.num_nodes), positions=cloud.positions, frames=R,
                    features=to_local(self.rho_in, R, raw), spec=self.rho_in,
                )
            ],
            seed=self.seed,
        )
        for spec, block in zip(self.layer_specs, self.blocks):
            if spec.kind == "encoder":
                encoder_layer(state, spec, block)
            elif spec.kind == "decoder":
                decoder_layer(state, spec, block)
            elif spec.kind == "message":
                message_layer(state, spec, block)
            else:
                global_pool(state, spec, block, self.config.anchor)
        top = state.top
        local = self.head(top.features) if self.head is not None else top.features
        output = to_global(self.rho_out, top.frames, local)
        if self.config.head is not None and self.config.head.normalize:
            output = normalize_vectors(self.rho_out, output)
        return PipelineResult(output=output, frames=R.data, refinements=state.refinements, anchor=state.anchor)

    __call__ = forward


def build_pipeline(config: PipelineConfig, seed: int = settings.DEFAULT_SEED) -> Pipeline:
    return Pipeline(config, seed)


def run_pipeline(pipeline: Pipeline, cloud: PointCloud, **kwargs) -> FeatureBlock:
    """Evaluate without recording gradients; output rows live in the global frame."""
    result = pipeline.forward(cloud, **kwargs)
    return FeatureBlock(values=T.raw(result.output), spec=pipeline.rho_out)

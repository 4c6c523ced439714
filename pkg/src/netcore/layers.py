"""
Dense layers, per-cloud feature normalisation and the SiLU MLP used for every learned map.

Modules own their parameters as attributes; ``named_parameters`` walks attributes in definition
order, so parameter order (and therefore checkpoint layout) is fixed by the constructor.
"""
from typing import Iterator, Optional, Sequence

import numpy as np

from src.core.config import settings
from src.core.errors import ContractViolation
from src.netcore import tape as T
from src.netcore.tape import Parameter, Value


class Buffer:
    """Non-trainable state saved with checkpoints (running statistics)."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.array(data, dtype=np.float64, copy=True)


class Module:
    training: bool = True

    def _children(self) -> Iterator[tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    yield f"{name}.{i}", item
            else:
                yield name, value

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out = []
        for name, value in self._children():
            if isinstance(value, Parameter):
                out.append((prefix + name, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(f"{prefix}{name}."))
        return out

    def named_buffers(self, prefix: str = "") -> list[tuple[str, Buffer]]:
        out = []
        for name, value in self._children():
            if isinstance(value, Buffer):
                out.append((prefix + name, value))
            elif isinstance(value, Module):
                out.extend(value.named_buffers(f"{prefix}{name}."))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, value in self._children():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / max(fan_in + fan_out, 1))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        self.fan_in, self.fan_out = fan_in, fan_out
        self.weight = Parameter(glorot_uniform(rng, fan_in, fan_out))
        self.bias = Parameter(np.zeros(fan_out))

    def __call__(self, x: T.ValueLike) -> Value:
        x = T.as_value(x)
        if x.shape[-1] != self.fan_in:
            raise ContractViolation(f"linear layer expects width {self.fan_in}, got {x.shape[-1]}")
        return x @ self.weight + self.bias


class FeatureNorm(Module):
    """Per-channel standardisation over the rows of one batch (the nodes of one cloud).

    Batches of fewer than two rows, and evaluation mode, use the running statistics.
    """

    def __init__(self, width: int, eps: float = settings.BN_EPS, momentum: float = 0.1):
        self.eps = eps
        self.momentum = momentum
        self.scale = Parameter(np.ones(width))
        self.shift = Parameter(np.zeros(width))
        self.running_mean = Buffer(np.zeros(width))
        self.running_var = Buffer(np.ones(width))

    def __call__(self, x: T.ValueLike) -> Value:
        x = T.as_value(x)
        rows = x.shape[0]
        if self.training and rows >= 2:
            mu = T.mean(x, axis=0, keepdims=True)
            centred = x - mu
            var = T.mean(centred * centred, axis=0, keepdims=True)
            normed = centred * T.reciprocal(T.sqrt(var + self.eps))
            m = self.momentum
            unbiased = var.data[0] * rows / (rows - 1)
            self.running_mean.data = (1 - m) * self.running_mean.data + m * mu.data[0]
            self.running_var.data = (1 - m) * self.running_var.data + m * unbiased
        else:
            normed = (x - self.running_mean.data) * (1.0 / np.sqrt(self.running_var.data + self.eps))
        return normed * self.scale + self.shift


def feature_norm(x: T.ValueLike, norm: Optional[FeatureNorm]) -> Value:
    """``mode=none`` is ``norm=None``."""
    return T.as_value(x) if norm is None else norm(x)


class Mlp(Module):
    """Affine-SiLU chain with an affine output layer.

    Hidden layers may be followed by ``FeatureNorm`` before the activation; ``dropout`` is applied to
    the last hidden activation in training mode only.
    """

    def __init__(
        self,
        widths: Sequence[int],
        rng: np.random.Generator,
        norm: bool = False,
        dropout: float = 0.0,
        final_bias: Optional[Sequence[float]] = None,
    ):
        if len(widths) < 2:
            raise ContractViolation(f"an MLP needs at least input and output widths, got {list(widths)}")
        if not 0.0 <= dropout < 1.0:
            raise ContractViolation(f"dropout rate must be in [0, 1), got {dropout}")
        self.widths = [int(w) for w in widths]
        self.dropout = dropout
        self.layers = [Linear(a, b, rng) for a, b in zip(self.widths[:-1], self.widths[1:])]
        self.norms = [FeatureNorm(w) for w in self.widths[1:-1]] if norm else []
        self._dropout_rng = np.random.default_rng(rng.integers(2**63))
        if final_bias is not None:
            final_bias = np.asarray(final_bias, dtype=np.float64)
            if final_bias.shape != (self.widths[-1],):
                raise ContractViolation(f"final bias must have shape ({self.widths[-1]},)")
            self.layers[-1].bias.data = final_bias.copy()

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]

    def affine_parameter_count(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def __call__(self, x: T.ValueLike, rng: Optional[np.random.Generator] = None) -> Value:
        h = T.as_value(x)
        for k, layer in enumerate(self.layers[:-1]):
            h = layer(h)
            if self.norms:
                h = self.norms[k](h)
            h = T.silu(h)
        if self.training and self.dropout > 0.0 and len(self.layers) > 1:
            keep = 1.0 - self.dropout
            mask = (rng or self._dropout_rng).random(h.shape) < keep
            h = h * (mask / keep)
        return self.layers[-1](h)


def mlp_forward(mlp: Mlp, x: T.ValueLike) -> Value:
    return mlp(x)

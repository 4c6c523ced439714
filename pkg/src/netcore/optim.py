"""
AdamW with decoupled weight decay, the warmup + cosine learning-rate schedule and global-norm clipping.
"""
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from src.core.errors import ContractViolation
from src.netcore.tape import Parameter


@dataclass
class AdamWState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamWState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adamw_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamWState,
    lr: float,
    weight_decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamWState]:
    """One AdamW update; returns new arrays and a new state, leaving the inputs untouched."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractViolation("parameters, gradients and optimizer state differ in length")
    beta1, beta2 = betas
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ContractViolation(f"shape mismatch in optimizer state: {p.shape}, {g.shape}, {m.shape}")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        updated = p * (1 - lr * weight_decay) - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_params.append(updated)
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamWState(m=new_m, v=new_v, step=t)


class AdamW:
    """Stateful wrapper applying ``adamw_step`` in place to a list of parameters."""

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamWState.zeros_like([p.data for p in self.params])

    def step(self, grads: Sequence[np.ndarray], lr: float = None) -> None:
        updated, self.state = adamw_step(
            [p.data for p in self.params], grads, self.state,
            lr=self.lr if lr is None else lr,
            weight_decay=self.weight_decay, betas=self.betas, eps=self.eps,
        )
        for p, data in zip(self.params, updated):
            p.data = data


def cosine_lr_schedule(step: int, total: int, warmup: int, base_lr: float) -> float:
    """Linear warmup from 0 to ``base_lr``, then half-cosine decay reaching 0 at ``total``."""
    if not 0 <= step <= total:
        raise ContractViolation(f"step {step} outside [0, {total}]")
    if warmup > 0 and step <= warmup:
        return base_lr * step / warmup
    span = max(total - warmup, 1)
    progress = min((step - warmup) / span, 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def global_grad_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Scale all gradients jointly so their global norm is at most ``max_norm``."""
    total = global_grad_norm(grads)
    if total <= max_norm or total == 0.0:
        return list(grads), total
    factor = max_norm / total
    return [g * factor for g in grads], total

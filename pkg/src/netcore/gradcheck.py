"""
Central finite-difference checks of tape gradients.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from src.netcore.tape import Parameter, Tape, Value


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    worst_parameter: Optional[str]
    checked: int

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))


def numerical_gradient(
    fn: Callable[[], Value], param: Parameter, indices: Optional[Sequence[tuple]] = None, h: float = 1e-6
) -> dict[tuple, float]:
    """Central differences of the scalar ``fn()`` at the given entries of ``param``."""
    out = {}
    if indices is None:
        indices = list(np.ndindex(param.data.shape))
    for idx in indices:
        original = param.data[idx]
        param.data[idx] = original + h
        plus = fn().item()
        param.data[idx] = original - h
        minus = fn().item()
        param.data[idx] = original
        out[idx] = (plus - minus) / (2 * h)
    return out


def gradient_check(
    fn: Callable[[], Value],
    params: Sequence[Parameter],
    names: Optional[Sequence[str]] = None,
    h: float = 1e-6,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckResult:
    """Compare tape gradients of ``fn`` against central differences.

    ``fn`` must be deterministic (no dropout, fixed frame sampling). With ``max_entries`` only a
    random subset of each parameter's entries is perturbed.
    """
    with Tape() as tape:
        loss = fn()
    analytic = tape.gradients(loss, params)
    names = list(names) if names is not None else [f"param{k}" for k in range(len(params))]
    rng = rng or np.random.default_rng(0)
    worst, worst_name, checked = 0.0, None, 0
    for name, param, grad in zip(names, params, analytic):
        indices = list(np.ndindex(param.data.shape))
        if max_entries is not None and len(indices) > max_entries:
            picks = rng.choice(len(indices), size=max_entries, replace=False)
            indices = [indices[k] for k in sorted(picks)]
        numeric = numerical_gradient(fn, param, indices, h)
        for idx, value in numeric.items():
            err = float(relative_error(np.asarray(grad[idx]), np.asarray(value)))
            checked += 1
            if err > worst:
                worst, worst_name = err, f"{name}{list(idx)}"
    return GradCheckResult(max_rel_error=worst, worst_parameter=worst_name, checked=checked)

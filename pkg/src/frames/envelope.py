"""
Polynomial envelope that takes neighbour weights smoothly to zero at the cutoff radius.
"""
from functools import partial
from typing import Callable

import numpy as np

from src.core.config import settings
from src.core.errors import ContractViolation


def envelope(r, r_c: float, p: int = settings.ENVELOPE_P):
    """1 - (p+1)(p+2)/2 x^p + p(p+2) x^(p+1) - p(p+1)/2 x^(p+2) with x = r / r_c, and 0 for r >= r_c."""
    if not r_c > 0:
        raise ContractViolation(f"cutoff radius must be positive, got {r_c}")
    if p < 1:
        raise ContractViolation(f"envelope exponent must be >= 1, got {p}")
    r = np.asarray(r, dtype=np.float64)
    x = r / r_c
    xp = x ** p
    poly = 1.0 - (p + 1) * (p + 2) / 2 * xp + p * (p + 2) * xp * x - p * (p + 1) / 2 * xp * x * x
    out = np.where(x < 1.0, poly, 0.0)
    return float(out) if out.ndim == 0 else out


def envelope_fn(r_c: float, p: int = settings.ENVELOPE_P) -> Callable[[np.ndarray], np.ndarray]:
    return partial(envelope, r_c=r_c, p=p)

"""
Tensor and pseudotensor representations of O(d) acting on feature blocks.

Flattening convention: an order-n segment of a term with multiplicity m occupies m * d**n columns,
laid out row-major over (copy, i_1, ..., i_n). Each index is contracted with R by its own mode
contraction, so no d**n x d**n matrix is ever built.
"""
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from src.core.errors import ContractViolation
from src.netcore import tape as T
from src.reps.spec import Parity, RepSpec

_INDEX = "pqrstuvw"

Group = Literal["SO(d)", "O(d)"]


@dataclass(frozen=True)
class FeatureBlock:
    """N x W coordinates of features transforming under ``spec``."""

    values: np.ndarray
    spec: RepSpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != self.spec.width:
            raise ContractViolation(
                f"feature block of shape {values.shape} does not match width {self.spec.width} of {self.spec}"
            )
        object.__setattr__(self, "values", values)

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]


def is_orthogonal(R: np.ndarray, tol: float = 1e-12) -> bool:
    R = np.asarray(R, dtype=np.float64)
    eye = np.eye(R.shape[-1])
    gram = R @ np.swapaxes(R, -1, -2)
    dets = np.abs(np.linalg.det(R))
    return bool(np.all(np.abs(gram - eye) <= tol) and np.all(np.abs(dets - 1.0) <= tol))


def _mode_subscripts(order: int, axis: int, shared: bool) -> str:
    idx = _INDEX[:order]
    out = idx[:axis] + "z" + idx[axis + 1:]
    rot = f"z{idx[axis]}" if shared else f"bz{idx[axis]}"
    return f"{rot},bm{idx}->bm{out}"


def transform(spec: RepSpec, R: T.ValueLike, x: T.ValueLike) -> T.Value:
    """rho(R) x for a batch of rows.

    ``R`` is either one d x d matrix shared by all rows or a stack (B, d, d) with one matrix per row;
    ``x`` is (B, W) or a single row (W,). Works on plain arrays and on tape values alike.
    """
    R, x = T.as_value(R), T.as_value(x)
    d = spec.dim_space
    if R.shape[-2:] != (d, d) or R.ndim not in (2, 3):
        raise ContractViolation(f"expected {d}x{d} orthogonal matrices, got shape {R.shape}")
    single = x.ndim == 1
    if single:
        x = T.reshape(x, (1, x.shape[0]))
    if x.ndim != 2 or x.shape[1] != spec.width:
        raise ContractViolation(f"feature width {x.shape[-1]} does not match {spec} (width {spec.width})")
    shared = R.ndim == 2
    if not shared and R.shape[0] != x.shape[0]:
        raise ContractViolation(f"{R.shape[0]} frames for {x.shape[0]} feature rows")
    if spec.is_trivial:
        return T.reshape(x, (spec.width,)) if single else x

    batch = x.shape[0]
    sign = np.where(np.linalg.det(R.data) < 0, -1.0, 1.0)
    parts = []
    for term, cols in spec.term_slices():
        segment = x[:, cols]
        if term.order > 0:
            width = cols.stop - cols.start
            t = T.reshape(segment, (batch, term.multiplicity) + (d,) * term.order)
            for axis in range(term.order):
                t = T.einsum(_mode_subscripts(term.order, axis, shared), R, t)
            segment = T.reshape(t, (batch, width))
        if term.parity is Parity.PSEUDO:
            segment = segment * (sign if shared else sign[:, None])
        parts.append(segment)
    out = T.concatenate(parts, axis=-1) if len(parts) > 1 else parts[0]
    return T.reshape(out, (spec.width,)) if single else out


def apply_rep(spec: RepSpec, R: np.ndarray, f: FeatureBlock) -> FeatureBlock:
    """Transform every row of ``f`` by rho(R); ``R`` may also be one matrix per row."""
    if f.spec != spec:
        raise ContractViolation(f"feature block is tagged {f.spec}, not {spec}")
    return FeatureBlock(values=transform(spec, np.asarray(R, dtype=np.float64), f.values).data, spec=spec)


def change_of_basis(spec: RepSpec, R_to: np.ndarray, R_from: np.ndarray, f: FeatureBlock) -> FeatureBlock:
    """Re-express features given in frame ``R_from`` in frame ``R_to``: rho(R_to R_from^T) f."""
    R_to, R_from = np.asarray(R_to, dtype=np.float64), np.asarray(R_from, dtype=np.float64)
    return apply_rep(spec, R_to @ np.swapaxes(R_from, -1, -2), f)


def random_orthogonal(
    rng: np.random.Generator,
    group: Group = "O(d)",
    d: int = 3,
    reflect: Optional[bool] = None,
) -> np.ndarray:
    """Haar-distributed element of SO(d) or O(d) (QR of a Gaussian matrix, sign-fixed diagonal).

    For O(d) the sample is reflected with probability 1/2, or exactly when ``reflect`` says so.
    """
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    if group == "O(d)":
        flip = rng.random() < 0.5 if reflect is None else reflect
        if flip:
            q[0, :] = -q[0, :]
    elif reflect:
        raise ContractViolation("SO(d) samples cannot be reflections")
    return q

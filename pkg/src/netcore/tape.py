"""
Reverse-mode differentiation over numpy arrays.

A ``Value`` wraps a float64 ndarray. While a ``Tape`` is active (``with Tape() as tape:``) every
primitive whose inputs require gradients is appended to that tape. Append order is a topological
order, so ``Tape.gradients`` visits each recorded node exactly once, walking the list backwards.
Gradients live in a per-call dictionary, never on the leaves, so several tapes may read the same
parameters concurrently. Outside a tape the primitives only evaluate.
"""
from __future__ import annotations

import contextvars
from typing import Callable, Optional, Sequence, Union

import numpy as np

from src.core.errors import ContractViolation

_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar("active_tape", default=None)

Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Value:
    """Array-valued node of the computation graph."""

    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward")
    __array_ufunc__ = None  # ndarray <op> Value defers to the reflected Value method

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Value, ...] = ()
        self._backward: Optional[Backward] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Value{label} shape={self.shape} grad={self.requires_grad}>"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return mul(self, reciprocal(other))
    def __rtruediv__(self, other): return mul(other, reciprocal(self))
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __getitem__(self, index): return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Value":
        return vsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Value":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Value):
    """Trainable leaf."""

    __slots__ = ()

    def __init__(self, data, name: Optional[str] = None):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)


class Tape:
    """Records primitives evaluated inside its ``with`` block."""

    def __init__(self):
        self._nodes: list[Value] = []
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self._nodes)

    def gradients(self, loss: Value, params: Sequence[Value]) -> list[np.ndarray]:
        """Exact reverse-mode gradients of a scalar ``loss`` with respect to ``params``."""
        if loss.data.size != 1:
            raise ContractViolation(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self._nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
        return [grads.get(id(p), np.zeros_like(p.data)) for p in params]


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE.get()


ValueLike = Union[Value, np.ndarray, float, int]


def as_value(x: ValueLike) -> Value:
    return x if isinstance(x, Value) else Value(x)


def raw(x: ValueLike) -> np.ndarray:
    """The ndarray behind a Value (or the array itself)."""
    return x.data if isinstance(x, Value) else np.asarray(x, dtype=np.float64)


def detach(x: ValueLike) -> Value:
    return Value(raw(x))


def _record(data: np.ndarray, parents: tuple[Value, ...], backward_fn: Backward) -> Value:
    out = Value(data)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        tape._nodes.append(out)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# elementwise arithmetic

def add(a: ValueLike, b: ValueLike) -> Value:
    a, b = as_value(a), as_value(b)
    return _record(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: ValueLike, b: ValueLike) -> Value:
    a, b = as_value(a), as_value(b)
    return _record(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def neg(a: ValueLike) -> Value:
    a = as_value(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def mul(a: ValueLike, b: ValueLike) -> Value:
    a, b = as_value(a), as_value(b)
    return _record(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def reciprocal(a: ValueLike) -> Value:
    a = as_value(a)
    out = 1.0 / a.data
    return _record(out, (a,), lambda g: (-g * out * out,))


def exp(a: ValueLike) -> Value:
    a = as_value(a)
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a: ValueLike) -> Value:
    a = as_value(a)
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: ValueLike) -> Value:
    a = as_value(a)
    out = np.sqrt(a.data)
    return _record(out, (a,), lambda g: (0.5 * g / out,))


def vabs(a: ValueLike) -> Value:
    a = as_value(a)
    return _record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def sigmoid_array(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(a: ValueLike) -> Value:
    a = as_value(a)
    s = sigmoid_array(a.data)
    return _record(a.data * s, (a,), lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def where(mask: np.ndarray, a: ValueLike, b: ValueLike) -> Value:
    """Select elementwise by a constant boolean mask; no gradient flows through the mask."""
    a, b = as_value(a), as_value(b)
    mask = np.asarray(mask, dtype=bool)
    return _record(
        np.where(mask, a.data, b.data), (a, b),
        lambda g: (
            _unbroadcast(np.where(mask, g, 0.0), a.shape),
            _unbroadcast(np.where(mask, 0.0, g), b.shape),
        ),
    )


# linear algebra

def matmul(a: ValueLike, b: ValueLike) -> Value:
    a, b = as_value(a), as_value(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractViolation("matmul expects operands with at least two dimensions")

    def _bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(a.data @ b.data, (a, b), _bw)


def einsum(subscripts: str, *operands: ValueLike) -> Value:
    """Explicit-output einsum (``"ij,jk->ik"``); no ellipsis, no repeated index within an operand."""
    if "->" not in subscripts or "." in subscripts:
        raise ContractViolation(f"einsum needs explicit output subscripts: {subscripts!r}")
    values = tuple(as_value(op) for op in operands)
    inputs, output = subscripts.replace(" ", "").split("->")
    in_subs = inputs.split(",")
    if len(in_subs) != len(values):
        raise ContractViolation(f"{subscripts!r} expects {len(in_subs)} operands, got {len(values)}")
    out = np.einsum(subscripts, *(v.data for v in values))

    def _bw(g):
        grads = []
        for k, sub_k in enumerate(in_subs):
            if not values[k].requires_grad:
                grads.append(None)
                continue
            others = [in_subs[m] for m in range(len(values)) if m != k]
            other_data = [values[m].data for m in range(len(values)) if m != k]
            present = set(output).union(*others) if others else set(output)
            reduced = "".join(c for c in sub_k if c in present)
            grad = np.einsum(",".join([output] + others) + "->" + reduced, g, *other_data)
            if reduced != sub_k:
                for axis, c in enumerate(sub_k):
                    if c not in present:
                        grad = np.expand_dims(grad, axis)
                grad = np.broadcast_to(grad, values[k].shape).copy()
            grads.append(grad)
        return grads

    return _record(out, values, _bw)


# reductions

def vsum(a: ValueLike, axis=None, keepdims: bool = False) -> Value:
    a = as_value(a)

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.ascontiguousarray(np.broadcast_to(g, a.shape)),)

    return _record(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), _bw)


def mean(a: ValueLike, axis=None, keepdims: bool = False) -> Value:
    a = as_value(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return vsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def amax(a: ValueLike, axis: int = -1) -> Value:
    """Maximum along ``axis``; the gradient goes to the first (lowest-index) maximiser."""
    a = as_value(a)
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def _bw(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _record(out, (a,), _bw)


def norm(a: ValueLike, axis: int = -1, keepdims: bool = False) -> Value:
    a = as_value(a)
    return sqrt(vsum(a * a, axis=axis, keepdims=keepdims))


def segment_sum(a: ValueLike, index: np.ndarray, num_segments: int) -> Value:
    """Sum rows of ``a`` into ``num_segments`` buckets given by ``index``."""
    a = as_value(a)
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((num_segments,) + a.shape[1:])
    np.add.at(out, index, a.data)
    return _record(out, (a,), lambda g: (g[index],))


def segment_max(a: ValueLike, index: np.ndarray, num_segments: int) -> Value:
    """Channel-wise maximum of the rows in each segment; empty segments give zero.

    NaN propagates: a segment holding a NaN row reports NaN in that channel. The gradient of each
    output entry is routed to the lowest row index attaining the maximum.
    """
    a = as_value(a)
    index = np.asarray(index, dtype=np.int64)
    rows, channels = a.shape[0], int(np.prod(a.shape[1:], dtype=np.int64))
    flat = a.data.reshape(rows, channels)
    out = np.full((num_segments, channels), -np.inf)
    np.maximum.at(out, index, flat)
    attained = (flat == out[index]) | (np.isnan(flat) & np.isnan(out[index]))
    candidates = np.where(attained, np.arange(rows)[:, None], rows)
    arg = np.full((num_segments, channels), rows, dtype=np.int64)
    np.minimum.at(arg, index, candidates)
    filled = arg < rows
    out = np.where(filled, out, 0.0)

    def _bw(g):
        g = g.reshape(num_segments, channels)
        full = np.zeros((rows, channels))
        seg, ch = np.nonzero(filled)
        full[arg[seg, ch], ch] = g[seg, ch]
        return (full.reshape(a.shape),)

    return _record(out.reshape((num_segments,) + a.shape[1:]), (a,), _bw)


# shape manipulation

def reshape(a: ValueLike, shape: tuple[int, ...]) -> Value:
    a = as_value(a)
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a: ValueLike, axis1: int, axis2: int) -> Value:
    a = as_value(a)
    return _record(np.swapaxes(a.data, axis1, axis2), (a,), lambda g: (np.swapaxes(g, axis1, axis2),))


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, type(Ellipsis), type(None))) for p in parts)


def getitem(a: ValueLike, index) -> Value:
    a = as_value(a)
    basic = _is_basic_index(index)

    def _bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _record(a.data[index], (a,), _bw)


def concatenate(values: Sequence[ValueLike], axis: int = -1) -> Value:
    parts = tuple(as_value(v) for v in values)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    return _record(
        np.concatenate([p.data for p in parts], axis=axis), parts,
        lambda g: np.split(g, splits, axis=axis),
    )


def stack(values: Sequence[ValueLike], axis: int = 0) -> Value:
    parts = tuple(as_value(v) for v in values)
    return _record(
        np.stack([p.data for p in parts], axis=axis), parts,
        lambda g: [np.take(g, i, axis=axis) for i in range(len(parts))],
    )

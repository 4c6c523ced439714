from __future__ import annotations

import numpy as np
import pytest

from src.core.errors import ContractViolation
from src.netcore import tape as T
from src.netcore.gradcheck import gradient_check, relative_error
from src.netcore.tape import Parameter, Tape, Value

pytestmark = pytest.mark.unit


def test_square_gradient():
    x = Parameter(3.0)
    with Tape() as tape:
        loss = x * x
    (grad,) = tape.gradients(loss, [x])
    assert grad == pytest.approx(6.0)


def test_max_routes_to_argmax():
    x = Parameter([2.0, 5.0])
    with Tape() as tape:
        loss = T.amax(x, axis=0)
    np.testing.assert_array_equal(tape.gradients(loss, [x])[0], [0.0, 1.0])


def test_ties_route_to_lowest_index():
    x = Parameter([[1.0, 4.0], [1.0, 4.0], [0.5, 9.0]])
    with Tape() as tape:
        pooled = T.segment_max(x, np.array([0, 0, 0]), 1)
        loss = T.vsum(pooled)
    np.testing.assert_array_equal(pooled.data, [[1.0, 9.0]])
    np.testing.assert_array_equal(tape.gradients(loss, [x])[0], [[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])


def test_segment_max_leaves_empty_segments_at_zero():
    x = Parameter([[-3.0], [-1.0]])
    with Tape() as tape:
        pooled = T.segment_max(x, np.array([2, 2]), 3)
        loss = T.vsum(pooled)
    np.testing.assert_array_equal(pooled.data, [[0.0], [0.0], [-1.0]])
    np.testing.assert_array_equal(tape.gradients(loss, [x])[0], [[0.0], [1.0]])


def test_segment_max_propagates_nan():
    x = Parameter([[1.0, np.nan], [2.0, 3.0], [-1.0, 4.0]])
    with Tape() as tape:
        pooled = T.segment_max(x, np.array([0, 0, 1]), 3)
        loss = T.vsum(pooled[:, 0])
    np.testing.assert_array_equal(pooled.data, [[2.0, np.nan], [-1.0, 4.0], [0.0, 0.0]])
    np.testing.assert_array_equal(tape.gradients(loss, [x])[0], [[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])


def test_non_scalar_loss_is_rejected():
    x = Parameter(np.ones(3))
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ContractViolation):
        tape.gradients(y, [x])


def test_unused_parameter_gets_zero_gradient():
    x, unused = Parameter(np.ones(2)), Parameter(np.ones((2, 2)))
    with Tape() as tape:
        loss = T.vsum(x * x)
    grads = tape.gradients(loss, [x, unused])
    np.testing.assert_array_equal(grads[1], np.zeros((2, 2)))


def test_nothing_is_recorded_outside_a_tape():
    x = Parameter(np.ones(2))
    y = T.exp(x) + 1.0
    assert not y.requires_grad
    with Tape() as tape:
        T.exp(Value(np.ones(2))) + 1.0
    assert len(tape) == 0


def test_einsum_needs_explicit_output():
    with pytest.raises(ContractViolation):
        T.einsum("ij,jk", np.eye(2), np.eye(2))


def test_composite_gradients_match_finite_differences(rng):
    a = Parameter(rng.standard_normal((4, 3)))
    b = Parameter(rng.standard_normal((3, 3)))
    c = Parameter(rng.uniform(0.5, 2.0, size=(4,)))
    index = np.array([0, 2, 2, 1])
    mask = rng.random((4, 3)) < 0.5

    def loss():
        h = T.silu(T.einsum("nj,jk->nk", a, b))
        h = T.where(mask, h, T.exp(a * 0.3))
        pooled = T.segment_sum(h * T.reshape(T.sqrt(c), (4, 1)), index, 3)
        stacked = T.stack([pooled, T.swapaxes(T.reshape(b, (3, 3)), 0, 1)], axis=0)
        picked = stacked[np.array([0, 1]), np.array([1, 2])]
        tail = T.concatenate([T.log(c), T.vsum(picked, axis=0)], axis=-1)
        return T.vsum(tail * tail) + T.mean(T.norm(a, axis=-1))

    result = gradient_check(loss, [a, b, c], names=["a", "b", "c"])
    assert result.checked == 12 + 9 + 4
    assert result.passed(1e-6), result


def test_relative_error_uses_unit_floor():
    assert relative_error(np.array(1e-9), np.array(2e-9)) == pytest.approx(1e-9)
    assert relative_error(np.array(100.0), np.array(101.0)) == pytest.approx(1.0 / 101.0)

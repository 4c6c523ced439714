from __future__ import annotations

import json

import numpy as np
import pytest

from src.core.errors import ContractViolation
from src.netcore.checkpoint import load_checkpoint, read_manifest, save_checkpoint
from src.netcore.layers import Mlp

pytestmark = pytest.mark.unit


def test_round_trip_restores_parameters_and_buffers(tmp_path, rng):
    source = Mlp([3, 5, 2], rng, norm=True)
    source(rng.standard_normal((8, 3)))  # moves the running statistics
    manifest = save_checkpoint(tmp_path, source, seed=11, step=4, config={"width": 5})

    target = Mlp([3, 5, 2], np.random.default_rng(99), norm=True)
    load_checkpoint(tmp_path, target)
    for (name, a), (_, b) in zip(source.named_parameters(), target.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=name)
    for (name, a), (_, b) in zip(source.named_buffers(), target.named_buffers()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=name)

    stored = read_manifest(tmp_path)
    assert stored == manifest
    assert stored.seed == 11 and stored.step == 4
    assert stored.entries[0].name == "layers.0.weight"
    assert stored.entries[-1].kind == "buffer"
    size = sum(int(np.prod(e.shape)) for e in stored.entries)
    assert (tmp_path / "checkpoint.bin").stat().st_size == 8 * size
    assert json.loads((tmp_path / "checkpoint.json").read_text())["dtype"] == "<f8"


def test_layout_mismatch_is_rejected(tmp_path, rng):
    save_checkpoint(tmp_path, Mlp([3, 5, 2], rng), seed=0)
    with pytest.raises(ContractViolation):
        load_checkpoint(tmp_path, Mlp([3, 6, 2], rng))


def test_truncated_and_padded_binaries(tmp_path, rng):
    mlp = Mlp([2, 2], rng)
    save_checkpoint(tmp_path, mlp, seed=0)
    payload = (tmp_path / "checkpoint.bin").read_bytes()

    (tmp_path / "checkpoint.bin").write_bytes(payload[:-8])
    with pytest.raises(ContractViolation, match="truncated"):
        load_checkpoint(tmp_path, mlp)

    (tmp_path / "checkpoint.bin").write_bytes(payload + b"\x00" * 8)
    with pytest.raises(ContractViolation, match="trailing"):
        load_checkpoint(tmp_path, mlp)

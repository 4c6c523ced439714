"""
Parameter checkpoints: a flat binary of little-endian doubles plus a JSON manifest.
"""
import json
from pathlib import Path
from typing import Any, Optional

import numpy as np

from src.core.errors import ContractViolation
from src.core.logging import train_logger
from src.netcore.layers import Module
from src.schemas.checkpoint import CheckpointManifest, TensorEntry
from src.utils.files import atomic_write_bytes, atomic_write_json

_DTYPE = np.dtype("<f8")


def _tensors(module: Module) -> list[tuple[TensorEntry, object]]:
    out = [(TensorEntry(name=n, shape=list(p.data.shape), kind="parameter"), p) for n, p in module.named_parameters()]
    out += [(TensorEntry(name=n, shape=list(b.data.shape), kind="buffer"), b) for n, b in module.named_buffers()]
    return out


def save_checkpoint(
    directory: Path,
    module: Module,
    seed: int,
    step: int = 0,
    config: Optional[dict[str, Any]] = None,
    task: Optional[dict[str, Any]] = None,
    stem: str = "checkpoint",
) -> CheckpointManifest:
    directory = Path(directory)
    tensors = _tensors(module)
    payload = b"".join(np.ascontiguousarray(t.data, dtype=_DTYPE).tobytes() for _, t in tensors)
    manifest = CheckpointManifest(entries=[e for e, _ in tensors], seed=seed, step=step, config=config, task=task)
    atomic_write_bytes(directory / f"{stem}.bin", payload)
    atomic_write_json(directory / f"{stem}.json", manifest.model_dump(mode="json"))
    train_logger.info(f"checkpoint written: {directory / stem}.bin ({len(payload)} bytes)")
    return manifest


def read_manifest(directory: Path, stem: str = "checkpoint") -> CheckpointManifest:
    with open(Path(directory) / f"{stem}.json", encoding="utf-8") as handle:
        return CheckpointManifest.model_validate(json.load(handle))


def load_checkpoint(directory: Path, module: Module, stem: str = "checkpoint") -> CheckpointManifest:
    """Fill ``module``'s parameters and buffers in place; names and shapes must match exactly."""
    manifest = read_manifest(directory, stem)
    flat = np.fromfile(Path(directory) / f"{stem}.bin", dtype=_DTYPE)
    tensors = _tensors(module)
    expected = [(e.name, e.shape, e.kind) for e, _ in tensors]
    stored = [(e.name, e.shape, e.kind) for e in manifest.entries]
    if expected != stored:
        raise ContractViolation("checkpoint layout does not match the module")
    offset = 0
    for entry, target in tensors:
        size = int(np.prod(entry.shape, dtype=np.int64))
        if offset + size > flat.size:
            raise ContractViolation("checkpoint binary is truncated")
        target.data = flat[offset:offset + size].astype(np.float64).reshape(entry.shape)
        offset += size
    if offset != flat.size:
        raise ContractViolation(f"checkpoint binary has {flat.size - offset} trailing values")
    return manifest

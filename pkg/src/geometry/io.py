"""
Point-cloud files: whitespace-separated text (``x y z [nx ny nz] [features...]`` per line, ``#``
comments) with a JSON sidecar header naming the feature blocks and their representations.
"""
import io
import json
from pathlib import Path
from typing import Any, Optional

import numpy as np

from src.core.config import settings
from src.core.errors import ConfigError
from src.core.logging import data_logger
from src.geometry.point_cloud import PointCloud
from src.reps.representation import FeatureBlock
from src.reps.spec import parse_rep_spec
from src.schemas.dataset import CloudHeader, FeatureColumn
from src.utils.files import atomic_write_json, atomic_write_text


def header_path(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def write_point_cloud(path: Path, cloud: PointCloud, **meta: Any) -> CloudHeader:
    """Write ``path`` (text) and its ``.json`` header.

    Floats round-trip exactly unless ``STORAGE_DTYPE`` is ``float32``.
    """
    path = Path(path)
    columns = [cloud.positions]
    if cloud.normals is not None:
        columns.append(cloud.normals)
    columns.extend(block.values for block in cloud.features.values())
    table = np.concatenate(columns, axis=1)
    header = CloudHeader(
        num_nodes=cloud.num_nodes,
        dim=cloud.dim,
        has_normals=cloud.normals is not None,
        features=[FeatureColumn(name=n, rep=str(b.spec)) for n, b in cloud.features.items()],
        **meta,
    )
    buffer = io.StringIO()
    names = ["x", "y", "z"][: cloud.dim] + (["nx", "ny", "nz"][: cloud.dim] if header.has_normals else [])
    fmt = "%.17g" if settings.STORAGE_DTYPE == "float64" else "%.9g"
    np.savetxt(buffer, table, fmt=fmt, header=" ".join(names))
    atomic_write_text(path, buffer.getvalue())
    atomic_write_json(header_path(path), header.model_dump(mode="json", exclude_none=True))
    return header


def read_point_cloud(path: Path, header: Optional[CloudHeader] = None) -> tuple[PointCloud, CloudHeader]:
    path = Path(path)
    if header is None:
        sidecar = header_path(path)
        if sidecar.exists():
            with open(sidecar, encoding="utf-8") as handle:
                header = CloudHeader.model_validate(json.load(handle))
    table = np.loadtxt(path, comments="#", ndmin=2)
    if header is None:
        if table.shape[1] not in (3, 6):
            raise ConfigError(f"{path}: {table.shape[1]} columns without a header")
        header = CloudHeader(num_nodes=table.shape[0], has_normals=table.shape[1] == 6)
    d = header.dim
    if table.shape[0] != header.num_nodes:
        raise ConfigError(f"{path}: header announces {header.num_nodes} nodes, file has {table.shape[0]}")
    offset = d
    normals = None
    if header.has_normals:
        normals = table[:, offset:offset + d]
        offset += d
    features = {}
    for column in header.features:
        spec = parse_rep_spec(column.rep, d)
        features[column.name] = FeatureBlock(values=table[:, offset:offset + spec.width], spec=spec)
        offset += spec.width
    if offset != table.shape[1]:
        raise ConfigError(f"{path}: expected {offset} columns, found {table.shape[1]}")
    data_logger.debug(f"read {header.num_nodes} nodes from {path}")
    return PointCloud(positions=table[:, :d], features=features, normals=normals), header

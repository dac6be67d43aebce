"""
Checkpoint format: an 8-byte magic, a little-endian uint64 header length, a
UTF-8 JSON header, then one float32 little-endian block per parameter in the
order the header lists them.
"""
import json
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from app.errors import DataError

MAGIC = b"MARCKPT1"


def save_checkpoint(path: Path, header: Mapping[str, Any], params: Mapping[str, np.ndarray]) -> Path:
    '''
    Write parameters and metadata.

    Args:
        path (Path): Destination file.
        header (Mapping[str, Any]): JSON-serializable metadata (architecture,
            normalization constants, seed, step).
        params (Mapping[str, np.ndarray]): Parameter arrays by name.
    Returns:
        Path: The written file.
    '''
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(header)
    doc["parameters"] = [{"name": k, "shape": list(np.shape(v))} for k, v in params.items()]
    blob = json.dumps(doc, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for values in params.values():
            f.write(np.asarray(values, dtype="<f4").tobytes())
    tmp.replace(path)
    return path


def load_checkpoint(path: Path) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    '''
    Read a checkpoint written by `save_checkpoint`.

    Returns:
        Tuple[Dict[str, Any], Dict[str, np.ndarray]]: Header and float64 parameters.
    '''
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as e:
        raise DataError(f"Checkpoint not found: {path}") from e
    if data[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not a checkpoint")
    offset = len(MAGIC)
    if len(data) < offset + 8:
        raise DataError(f"{path} is truncated")
    (length,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    try:
        header = json.loads(data[offset:offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path} has a corrupt header") from e
    offset += length
    params = {}
    for entry in header["parameters"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        try:
            block = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        except ValueError as e:
            raise DataError(f"{path} is truncated") from e
        params[entry["name"]] = block.astype(np.float64).reshape(entry["shape"])
        offset += 4 * count
    if offset != len(data):
        raise DataError(f"{path} has {len(data) - offset} trailing bytes")
    return header, params

"""Single-file container of named float32 tensors.

Layout: an 8-byte little-endian unsigned header length N, then N bytes of UTF-8
JSON ``{"metadata": {...}, "tensors": [{"name", "dtype", "shape", "offset",
"nbytes"}, ...]}``, then the float32 little-endian payloads back to back in header
order. ``offset`` is relative to the first payload byte.
"""
import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError

_HEADER_LEN = struct.Struct("<Q")
_DTYPE = np.dtype("<f4")


def _as_array(value):
    if hasattr(value, "detach"):
        value = value.detach().cpu().numpy()
    return np.array(value, dtype=_DTYPE, order="C")


def save_tensors(path, tensors, metadata=None):
    """Write a mapping of name -> array/tensor. Returns the path."""
    entries, payloads, offset = [], [], 0
    for name, value in tensors.items():
        arr = _as_array(value)
        data = arr.tobytes()
        entries.append(
            {"name": name, "dtype": "float32", "shape": list(arr.shape), "offset": offset, "nbytes": len(data)}
        )
        payloads.append(data)
        offset += len(data)
    header = json.dumps({"metadata": metadata or {}, "tensors": entries}, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_HEADER_LEN.pack(len(header)))
        fh.write(header)
        for data in payloads:
            fh.write(data)
    return path


def load_tensors(path):
    """Return ``(dict name -> float32 ndarray, metadata)``."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER_LEN.size:
        raise CheckpointError(f"{path} is too short to be a tensor container")
    (header_len,) = _HEADER_LEN.unpack_from(raw)
    start = _HEADER_LEN.size + header_len
    if start > len(raw):
        raise CheckpointError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(raw[_HEADER_LEN.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    tensors = {}
    for entry in header.get("tensors", []):
        if entry.get("dtype") != "float32":
            raise CheckpointError(f"{path}: unsupported dtype {entry.get('dtype')!r} for {entry.get('name')}")
        lo = start + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(raw):
            raise CheckpointError(f"{path}: payload of {entry['name']} is truncated")
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if count * _DTYPE.itemsize != entry["nbytes"]:
            raise CheckpointError(f"{path}: shape {entry['shape']} does not match {entry['nbytes']} bytes")
        tensors[entry["name"]] = np.frombuffer(raw, dtype=_DTYPE, count=count, offset=lo).reshape(entry["shape"]).copy()
    return tensors, header.get("metadata", {})

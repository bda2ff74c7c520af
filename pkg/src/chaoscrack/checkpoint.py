"""Versioned binary model checkpoints.

Layout: 8 magic bytes ``CHCKPT01``; a little-endian uint32 metadata length;
a JSON metadata block (format version, model kind, config, named parameter
and buffer descriptors, training metadata); raw little-endian array data in
declaration order (parameters first, then buffers); and a trailing 8-byte
content digest (the first 8 bytes of SHA-256 over everything preceding it).
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"CHCKPT01"
FORMAT_VERSION = 1

_DTYPE_CODES = {"float32": "<f4", "float64": "<f8"}


class CheckpointState:
    """Deserialized checkpoint contents, independent of any model class."""

    def __init__(self, kind, config, arrays, meta):
        self.kind = kind
        self.config = config
        self.arrays = arrays  # name -> ndarray (native byte order)
        self.meta = meta


def _describe(named_arrays):
    descriptors = []
    for name, arr in named_arrays:
        dtype = str(arr.dtype)
        if dtype not in _DTYPE_CODES:
            raise CheckpointError(
                f"array {name!r} has unsupported dtype {dtype}")
        descriptors.append({"name": name, "shape": list(arr.shape),
                            "dtype": dtype})
    return descriptors


def save_state(path, kind, config, named_params, named_buffers, meta=None):
    """Serialize named arrays plus config/metadata to a checkpoint file."""
    named_params = list(named_params)
    named_buffers = list(named_buffers)
    names = [n for n, _ in named_params + named_buffers]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate array names in checkpoint")
    metadata = {
        "version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "params": _describe(named_params),
        "buffers": _describe(named_buffers),
        "meta": dict(meta or {}),
    }
    meta_bytes = json.dumps(metadata, sort_keys=True).encode()
    chunks = [MAGIC, struct.pack("<I", len(meta_bytes)), meta_bytes]
    for _, arr in named_params + named_buffers:
        chunks.append(np.ascontiguousarray(
            arr, dtype=_DTYPE_CODES[str(arr.dtype)]).tobytes())
    body = b"".join(chunks)
    digest = hashlib.sha256(body).digest()[:8]
    Path(path).write_bytes(body + digest)


def load_state(path, expect_kind=None):
    """Read and validate a checkpoint file into a CheckpointState."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc

    if len(data) < len(MAGIC) + 4 + 8:
        raise CheckpointError(f"{path}: truncated checkpoint "
                              f"({len(data)} bytes)")
    if data[:8] != MAGIC:
        raise CheckpointError(
            f"{path}: bad magic {data[:8]!r} (expected {MAGIC!r})")

    digest = hashlib.sha256(data[:-8]).digest()[:8]
    if digest != data[-8:]:
        raise CheckpointError(f"{path}: content digest mismatch")

    (meta_len,) = struct.unpack("<I", data[8:12])
    meta_end = 12 + meta_len
    if meta_end > len(data) - 8:
        raise CheckpointError(
            f"{path}: truncated metadata block (declared {meta_len} bytes)")
    try:
        metadata = json.loads(data[12:meta_end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad metadata block: {exc}") from exc

    version = metadata.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version!r} "
            f"(supported: {FORMAT_VERSION})")
    kind = metadata.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(
            f"{path}: checkpoint kind {kind!r} does not match expected "
            f"{expect_kind!r}")

    arrays = {}
    offset = meta_end
    for desc in metadata["params"] + metadata["buffers"]:
        dtype = desc["dtype"]
        if dtype not in _DTYPE_CODES:
            raise CheckpointError(
                f"{path}: array {desc['name']!r} has unsupported dtype "
                f"{dtype}")
        shape = tuple(desc["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * (8 if dtype == "float64" else 4)
        end = offset + nbytes
        if end > len(data) - 8:
            raise CheckpointError(
                f"{path}: truncated array data for {desc['name']!r} "
                f"(need {nbytes} bytes at offset {offset})")
        arr = np.frombuffer(data, dtype=_DTYPE_CODES[dtype], count=count,
                            offset=offset)
        arrays[desc["name"]] = arr.astype(dtype).reshape(shape)
        offset = end
    if offset != len(data) - 8:
        raise CheckpointError(
            f"{path}: {len(data) - 8 - offset} unexpected trailing bytes "
            f"before digest")

    return CheckpointState(kind, metadata["config"], arrays,
                           metadata.get("meta", {}))


def file_digest(path):
    """Hex form of a checkpoint's trailing 8-byte content digest."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 + 8 or data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    return data[-8:].hex()


def restore_arrays(state, named_targets, path_label="checkpoint"):
    """Copy state arrays into live model arrays, validating name and shape."""
    for name, target in named_targets:
        if name not in state.arrays:
            raise CheckpointError(f"{path_label}: missing array {name!r}")
        src = state.arrays[name]
        if src.shape != target.shape:
            raise CheckpointError(
                f"{path_label}: array {name!r} has shape {src.shape}, "
                f"model expects {target.shape}")
        target[...] = src.astype(target.dtype)

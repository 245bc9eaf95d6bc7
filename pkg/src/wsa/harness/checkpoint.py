"""Portable parameter bundles: a JSON manifest next to one little-endian blob.

A checkpoint is a directory holding ``manifest.json`` and ``params.bin``.
Every array is described by name, shape, dtype, byte offset and length; the
manifest also carries a SHA-256 of the blob, so truncation, padding or bit
flips are rejected on load instead of being silently misread.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError

FORMAT = "wsa-checkpoint/1"
MANIFEST = "manifest.json"
BLOB = "params.bin"
DTYPES = {"f32-le": np.dtype("<f4"), "f64-le": np.dtype("<f8")}


@dataclass
class Checkpoint:
    arrays: dict
    meta: dict = field(default_factory=dict)


def _dtype_tag(a):
    if a.dtype == np.float32:
        return "f32-le"
    if a.dtype == np.float64:
        return "f64-le"
    raise CheckpointError(f"unsupported array dtype {a.dtype}; only f32 and f64 are stored")


def dumps_json(obj):
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def atomic_write(path, data: bytes):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_checkpoint(path, arrays: dict, meta: dict | None = None):
    """Write ``arrays`` (name -> float array) and JSON-able ``meta`` to ``path``."""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CheckpointError(f"cannot create checkpoint directory {path}: {exc}") from exc
    chunks, descriptors, offset = [], [], 0
    for name, value in arrays.items():
        a = np.asarray(value)
        tag = _dtype_tag(a)
        raw = np.ascontiguousarray(a, dtype=DTYPES[tag]).tobytes()
        descriptors.append({"name": name, "shape": list(a.shape), "dtype": tag,
                            "offset": offset, "length": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = {"format": FORMAT, "arrays": descriptors, "blob_bytes": len(blob),
                "sha256": hashlib.sha256(blob).hexdigest(), "meta": meta or {}}
    try:
        atomic_write(os.path.join(path, BLOB), blob)
        atomic_write(os.path.join(path, MANIFEST), dumps_json(manifest).encode())
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(os.path.join(path, MANIFEST), "rb") as fh:
            manifest = json.loads(fh.read())
        with open(os.path.join(path, BLOB), "rb") as fh:
            blob = fh.read()
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint {path} is missing {os.path.basename(exc.filename)}") from exc
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unsupported format {manifest.get('format')!r}, expected {FORMAT!r}")
    if manifest.get("blob_bytes") != len(blob):
        raise CheckpointError(f"{path}: blob is {len(blob)} bytes, manifest declares {manifest.get('blob_bytes')}")
    if hashlib.sha256(blob).hexdigest() != manifest.get("sha256"):
        raise CheckpointError(f"{path}: blob checksum mismatch")
    arrays, expected = {}, 0
    for d in manifest.get("arrays", []):
        try:
            name, shape, tag, off, length = d["name"], d["shape"], d["dtype"], d["offset"], d["length"]
        except (KeyError, TypeError):
            raise CheckpointError(f"{path}: malformed array descriptor {d!r}") from None
        if tag not in DTYPES:
            raise CheckpointError(f"{path}: array {name!r} has unknown dtype {tag!r}")
        if off != expected:
            raise CheckpointError(f"{path}: array {name!r} starts at byte {off}, expected {expected}")
        if length != int(np.prod(shape, dtype=np.int64)) * DTYPES[tag].itemsize:
            raise CheckpointError(f"{path}: array {name!r} length {length} does not match shape {shape}")
        if off + length > len(blob):
            raise CheckpointError(f"{path}: array {name!r} overflows the blob ({off}+{length} > {len(blob)})")
        arrays[name] = np.frombuffer(blob, DTYPES[tag], count=length // DTYPES[tag].itemsize,
                                     offset=off).reshape(shape).astype(DTYPES[tag].newbyteorder("="))
        expected = off + length
    if expected != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - expected} trailing bytes after the last array")
    return Checkpoint(arrays, manifest.get("meta", {}))


def file_digest(path):
    """SHA-256 over the manifest and blob of a checkpoint directory."""
    h = hashlib.sha256()
    for name in (MANIFEST, BLOB):
        with open(os.path.join(path, name), "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()

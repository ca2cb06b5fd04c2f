"""Versioned on-disk container for named float arrays.

Layout: an 8-byte magic, a little-endian uint32 manifest length, a UTF-8
JSON manifest, then the raw array payload (row-major, little-endian
floats, concatenated in manifest order).  Model checkpoints and saved
perturbations share this container and differ only in ``kind``/``meta``.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from typing import Mapping

import numpy as np

from .errors import (
    ContainerFormatError,
    ContainerPayloadError,
    ContainerVersionError,
)

MAGIC = b"RADVNDA\x01"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def dumps(arrays: Mapping[str, np.ndarray], kind: str, meta: dict | None = None) -> bytes:
    """Serialize named arrays to container bytes."""
    entries = []
    payload = io.BytesIO()
    for name, arr in arrays.items():
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported dtype {dtype} for array {name!r}")
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        payload.write(np.ascontiguousarray(arr).astype(_DTYPES[dtype], copy=False).tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "arrays": entries,
        "meta": meta or {},
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(mbytes)) + mbytes + payload.getvalue()


def save(path, arrays: Mapping[str, np.ndarray], kind: str, meta: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(dumps(arrays, kind, meta))


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict, dict]:
    """Parse container bytes; returns (arrays, meta, manifest)."""
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise ContainerFormatError("bad magic header: not an array container")
    (mlen,) = struct.unpack("<I", blob[len(MAGIC): len(MAGIC) + 4])
    mstart = len(MAGIC) + 4
    if len(blob) < mstart + mlen:
        raise ContainerFormatError("manifest truncated")
    try:
        manifest = json.loads(blob[mstart: mstart + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"manifest is not valid JSON: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ContainerVersionError(
            f"unsupported container version {version!r} (expected {FORMAT_VERSION})"
        )
    payload = blob[mstart + mlen:]
    expected = 0
    for entry in manifest["arrays"]:
        expected += int(np.prod(entry["shape"], dtype=np.int64)) * np.dtype(entry["dtype"]).itemsize
    if len(payload) != expected:
        raise ContainerPayloadError(
            f"payload length {len(payload)} does not match manifest ({expected} bytes declared)"
        )
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        wire = np.dtype(_DTYPES[entry["dtype"]])
        nbytes = count * wire.itemsize
        flat = np.frombuffer(payload, dtype=wire, count=count, offset=offset)
        arrays[entry["name"]] = flat.astype(entry["dtype"], copy=True).reshape(shape)
        offset += nbytes
    return arrays, manifest.get("meta", {}), manifest


def load(path) -> tuple[dict[str, np.ndarray], dict, dict]:
    with open(path, "rb") as f:
        return loads(f.read())


def fingerprint(arrays: Mapping[str, np.ndarray], kind: str, meta: dict | None = None) -> str:
    """SHA-256 over the serialized container: stable content identity."""
    return hashlib.sha256(dumps(arrays, kind, meta)).hexdigest()

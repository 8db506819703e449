"""Versioned binary container used for every persisted artifact.

Byte layout::

    b"GTSC\\x01\\n"                 6-byte magic (format version 1)
    uint64 little-endian           length H of the header in bytes
    H bytes of UTF-8 JSON          {"kind", "schema_version", "meta", "arrays"}
    array payloads                 concatenated, C order, little-endian

Each entry of ``arrays`` is ``{"name", "dtype", "shape", "offset", "nbytes"}``
with ``offset`` relative to the first payload byte. The header is written
with sorted keys and no whitespace, so identical inputs give identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GTSC\x01\n"
SCHEMA_VERSION = 1


class ContainerError(ValueError):
    pass


def to_bytes(kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = arr.tobytes(order="C")
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {"kind": kind, "schema_version": SCHEMA_VERSION, "meta": meta, "arrays": entries}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + b"".join(chunks)


def from_bytes(blob: bytes, kind: str | None = None) -> tuple[str, dict, dict[str, np.ndarray]]:
    if blob[: len(MAGIC)] != MAGIC:
        raise ContainerError("not a gantsc container (bad magic)")
    (hlen,) = struct.unpack("<Q", blob[len(MAGIC): len(MAGIC) + 8])
    start = len(MAGIC) + 8
    header = json.loads(blob[start: start + hlen].decode("utf-8"))
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ContainerError(f"unsupported schema version {header.get('schema_version')}")
    if kind is not None and header["kind"] != kind:
        raise ContainerError(f"expected a {kind!r} container, found {header['kind']!r}")
    base = start + hlen
    arrays = {}
    for e in header["arrays"]:
        lo = base + e["offset"]
        arr = np.frombuffer(blob[lo: lo + e["nbytes"]], dtype=np.dtype(e["dtype"]))
        arrays[e["name"]] = arr.reshape(e["shape"]).copy()
    return header["kind"], header["meta"], arrays


def save(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> str:
    """Write a container and return its sha256 hex digest."""
    blob = to_bytes(kind, meta, arrays)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path, kind: str | None = None):
    return from_bytes(Path(path).read_bytes(), kind)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

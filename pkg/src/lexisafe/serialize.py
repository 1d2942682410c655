"""Binary container I/O.

Both on-disk formats share one layout, little-endian throughout:

    magic (4 ASCII bytes) | version u32 | header_len u32 | UTF-8 JSON header
    | raw column bytes | FNV-1a 64-bit checksum of all preceding bytes (u64)

"LXSD" holds offline datasets (see data.py for the column order), "LXCK"
holds parameter checkpoints as named f64 columns.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    HeaderMismatchError,
    TruncatedDataError,
    VersionMismatchError,
)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

CHECKPOINT_MAGIC = b"LXCK"
DATASET_MAGIC = b"LXSD"
FORMAT_VERSION = 1


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash of a byte string."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def write_container(path, magic: bytes, header: dict, column_bytes: list[bytes]) -> int:
    """Write a container file, returning the checksum that was appended."""
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = bytearray()
    body += magic
    body += struct.pack("<II", FORMAT_VERSION, len(head))
    body += head
    for col in column_bytes:
        body += col
    checksum = fnv1a64(bytes(body))
    body += struct.pack("<Q", checksum)
    with open(path, "wb") as fh:
        fh.write(bytes(body))
    return checksum


def read_container(path, magic: bytes, column_sizes) -> tuple[dict, list[bytes]]:
    """Read and verify a container file.

    `column_sizes` maps a parsed header to the list of expected column byte
    lengths; it is a callable so the caller decides the schema.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != magic:
        raise BadMagicError(f"bad magic in {path}: expected {magic!r}")
    version, header_len = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported version {version} in {path}")
    if len(raw) < 12 + header_len:
        raise TruncatedDataError(f"truncated header in {path}")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderMismatchError(f"unreadable header in {path}: {exc}") from exc
    sizes = column_sizes(header)
    expected = 12 + header_len + sum(sizes) + 8
    if len(raw) < expected:
        raise TruncatedDataError(
            f"truncated columns in {path}: have {len(raw)} bytes, header implies {expected}"
        )
    if len(raw) > expected:
        raise HeaderMismatchError(
            f"header/column length disagreement in {path}: have {len(raw)} bytes, header implies {expected}"
        )
    (stored,) = struct.unpack_from("<Q", raw, expected - 8)
    actual = fnv1a64(raw[: expected - 8])
    if stored != actual:
        raise ChecksumMismatchError(f"checksum mismatch in {path}")
    cols = []
    offset = 12 + header_len
    for size in sizes:
        cols.append(raw[offset : offset + size])
        offset += size
    return header, cols


def save_checkpoint(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> int:
    """Save named f64 arrays to an LXCK container."""
    names = list(arrays.keys())
    header = dict(meta)
    header["kind"] = kind
    header["arrays"] = [[name, int(arrays[name].size)] for name in names]
    cols = [np.ascontiguousarray(arrays[n], dtype="<f8").tobytes() for n in names]
    return write_container(path, CHECKPOINT_MAGIC, header, cols)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Load an LXCK container; returns (header, name -> f64 array)."""

    def sizes(header):
        try:
            return [8 * int(n) for _, n in header["arrays"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise HeaderMismatchError(f"malformed checkpoint header in {path}") from exc

    header, cols = read_container(path, CHECKPOINT_MAGIC, sizes)
    arrays = {}
    for (name, _), col in zip(header["arrays"], cols):
        arrays[name] = np.frombuffer(col, dtype="<f8").astype(np.float64)
    return header, arrays

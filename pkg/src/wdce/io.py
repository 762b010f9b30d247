"""Binary tensor dumps and the manifest container built on them.

Tensor dump (little-endian)::

    b"WDCT" | u32 rank | u64 extent * rank | f64 payload, row-major

Container::

    b"WDCC" | u32 version | u64 manifest byte length | manifest (utf-8)
    | one tensor dump per manifest entry, in order

The manifest's first line is a JSON object of metadata; every following
line names one entry.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

TENSOR_MAGIC = b"WDCT"
CONTAINER_MAGIC = b"WDCC"
CONTAINER_VERSION = 1


class FormatError(ValueError):
    """Malformed or truncated file; the message carries the byte offset."""


def write_tensor(f: BinaryIO, array) -> None:
    a = np.asarray(array, dtype="<f8")
    f.write(TENSOR_MAGIC)
    f.write(struct.pack("<I", a.ndim))
    f.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    f.write(a.tobytes(order="C"))  # row-major regardless of memory layout


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    offset = f.tell()
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated {what} at byte offset {offset}: wanted {n} bytes, got {len(buf)}")
    return buf


def read_tensor(f: BinaryIO) -> np.ndarray:
    offset = f.tell()
    magic = _read_exact(f, 4, "tensor magic")
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r} at byte offset {offset}")
    (rank,) = struct.unpack("<I", _read_exact(f, 4, "tensor rank"))
    shape = struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank, "tensor extents"))
    count = int(np.prod(shape, dtype=np.int64))
    payload = _read_exact(f, 8 * count, "tensor payload")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)


def dump_tensor(path, array) -> None:
    with open(path, "wb") as f:
        write_tensor(f, array)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_tensor(f)


def container_bytes(meta: dict, entries: list[tuple[str, np.ndarray]]) -> bytes:
    for name, _ in entries:
        if "\n" in name:
            raise ValueError(f"entry name may not contain a newline: {name!r}")
    lines = [json.dumps(meta, sort_keys=True, separators=(",", ":"))] + [name for name, _ in entries]
    manifest = "\n".join(lines).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CONTAINER_MAGIC)
    buf.write(struct.pack("<IQ", CONTAINER_VERSION, len(manifest)))
    buf.write(manifest)
    for _, array in entries:
        write_tensor(buf, array)
    return buf.getvalue()


def write_container(path, meta: dict, entries: list[tuple[str, np.ndarray]]) -> None:
    Path(path).write_bytes(container_bytes(meta, entries))


def read_container(path) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "container magic")
        if magic != CONTAINER_MAGIC:
            raise FormatError(f"bad container magic {magic!r} at byte offset 0")
        version, length = struct.unpack("<IQ", _read_exact(f, 12, "container header"))
        if version != CONTAINER_VERSION:
            raise FormatError(f"unsupported container version {version} at byte offset 4")
        start = f.tell()
        raw = _read_exact(f, length, "manifest")
        try:
            lines = raw.decode("utf-8").split("\n")
            meta = json.loads(lines[0])
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"malformed manifest at byte offset {start}: {exc}") from None
        entries = [(name, read_tensor(f)) for name in lines[1:]]
        trailing = f.read(1)
        if trailing:
            raise FormatError(f"unexpected trailing data at byte offset {f.tell() - 1}")
    return meta, entries

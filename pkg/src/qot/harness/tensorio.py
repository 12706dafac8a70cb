"""Binary tensor files, checkpoints and dataset manifests.

Tensor file layout (little-endian)::

    b"QTNSR1" | dtype u8 (0=f32, 1=f64) | rank u8 | rank x u32 dims | row-major payload

A checkpoint is ``b"QCKPT1"``, a u32 header length, a UTF-8 ``key = value``
header, then for each tensor a u16 name length, the UTF-8 name and one
embedded tensor file.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np

__all__ = [
    "FormatError",
    "TENSOR_MAGIC",
    "CHECKPOINT_MAGIC",
    "encode_tensor",
    "decode_tensor",
    "write_tensor",
    "read_tensor",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "ManifestEntry",
    "read_manifest",
    "write_manifest",
]

TENSOR_MAGIC = b"QTNSR1"
CHECKPOINT_MAGIC = b"QCKPT1"
CHECKPOINT_SCHEMA = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class FormatError(ValueError):
    def __init__(self, message: str, offset: int, source: str | None = None):
        where = f"{source}: " if source else ""
        super().__init__(f"{where}{message} (byte offset {offset})")
        self.offset = offset


def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _CODES:
        raise TypeError(f"tensor files hold float32 or float64, got {arr.dtype}")
    if arr.ndim > 255:
        raise ValueError("rank exceeds 255")
    for d in arr.shape:
        if d > 0xFFFFFFFF:
            raise ValueError(f"extent {d} does not fit in u32")
    code = _CODES[arr.dtype]
    head = TENSOR_MAGIC + struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def _read_exact(buf: BinaryIO, n: int, what: str, source) -> bytes:
    offset = buf.tell()
    data = buf.read(n)
    if len(data) != n:
        raise FormatError(f"truncated {what}: expected {n} bytes, got {len(data)}", offset, source)
    return data


def _decode_from(buf: BinaryIO, source=None) -> np.ndarray:
    start = buf.tell()
    magic = _read_exact(buf, 6, "magic", source)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad magic {magic!r}", start, source)
    code, rank = struct.unpack("<BB", _read_exact(buf, 2, "header", source))
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}", start + 6, source)
    dims = struct.unpack(f"<{rank}I", _read_exact(buf, 4 * rank, "dims", source))
    count = 1
    for d in dims:
        count *= d
    nbytes = count * _DTYPES[code].itemsize
    if nbytes > 2**40:
        raise FormatError(f"dims {dims} overflow the supported payload size", start + 8, source)
    payload = _read_exact(buf, nbytes, "payload", source)
    return np.frombuffer(payload, dtype=_DTYPES[code]).reshape(dims).astype(_DTYPES[code].newbyteorder("="))


def decode_tensor(data: bytes, source=None) -> np.ndarray:
    buf = io.BytesIO(data)
    arr = _decode_from(buf, source)
    if buf.tell() != len(data):
        raise FormatError(f"{len(data) - buf.tell()} trailing bytes after payload", buf.tell(), source)
    return arr


def write_tensor(path, arr):
    path = Path(path)
    data = encode_tensor(arr)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    return decode_tensor(path.read_bytes(), source=str(path))


@dataclass
class Checkpoint:
    header: dict[str, str]
    tensors: dict[str, np.ndarray]


def _format_header(header: Mapping[str, object]) -> str:
    lines = []
    for k, v in header.items():
        if "\n" in str(v) or "=" in str(k):
            raise ValueError(f"header entry {k!r} cannot be encoded")
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def save_checkpoint(path, header: Mapping[str, object], tensors: Mapping[str, np.ndarray]):
    path = Path(path)
    full = {"schema": CHECKPOINT_SCHEMA, **header, "tensor_count": len(tensors)}
    head = _format_header(full).encode("utf-8")
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC)
    out.write(struct.pack("<I", len(head)))
    out.write(head)
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        out.write(struct.pack("<H", len(raw)))
        out.write(raw)
        out.write(encode_tensor(arr))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(out.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    src = str(path)
    buf = io.BytesIO(data)
    magic = _read_exact(buf, 6, "checkpoint magic", src)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", 0, src)
    (hlen,) = struct.unpack("<I", _read_exact(buf, 4, "header length", src))
    hoff = buf.tell()
    try:
        text = _read_exact(buf, hlen, "header", src).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"header is not UTF-8: {exc}", hoff, src) from None
    header = {}
    for line in text.splitlines():
        if line.strip():
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
    if header.get("schema") != str(CHECKPOINT_SCHEMA):
        raise FormatError(f"unsupported checkpoint schema {header.get('schema')!r}", hoff, src)
    count = int(header.get("tensor_count", "0"))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", _read_exact(buf, 2, "tensor name length", src))
        name = _read_exact(buf, nlen, "tensor name", src).decode("utf-8")
        tensors[name] = _decode_from(buf, src)
    if buf.tell() != len(data):
        raise FormatError(f"{len(data) - buf.tell()} trailing bytes", buf.tell(), src)
    return Checkpoint(header, tensors)


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: int


def read_manifest(path, num_classes: int | None = None, check_files: bool = True) -> list[ManifestEntry]:
    """Parse ``relative/path<TAB>label`` lines; paths resolve against the manifest's directory."""
    path = Path(path)
    root = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'path<TAB>label', got {line!r}")
        rel, label_s = parts
        try:
            label = int(label_s)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: label {label_s!r} is not an integer") from None
        if label < 0 or (num_classes is not None and label >= num_classes):
            raise ValueError(f"{path}:{lineno}: label {label} outside [0, {num_classes})")
        full = root / rel
        if check_files and not full.is_file():
            raise FileNotFoundError(f"{path}:{lineno}: missing file {full}")
        entries.append(ManifestEntry(full, label))
    return entries


def write_manifest(path, rows):
    """``rows`` are (relative_path, label) pairs."""
    path = Path(path)
    text = "".join(f"{Path(rel).as_posix()}\t{int(label)}\n" for rel, label in rows)
    path.write_text(text, encoding="utf-8")

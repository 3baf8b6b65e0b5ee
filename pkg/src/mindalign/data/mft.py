"""MFT1 binary tensor container.

Layout (all integers little-endian)::

    b"MFT1" | version u32 | entry count u32 |
    per entry: name length u16 | name (ASCII) | dtype u8 | rank u8 | dims u64 x rank | payload

dtype 0 is float32, 1 is float64; payloads are row-major.
"""

from __future__ import annotations

import os
import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import BinaryIO, Mapping

import numpy as np

from ..errors import FormatError

MAGIC = b"MFT1"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


@dataclass(frozen=True)
class EntryInfo:
    name: str
    dtype: np.dtype
    dims: tuple[int, ...]
    offset: int  # byte offset of the payload

    @property
    def nbytes(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) * self.dtype.itemsize


def _as_array(value) -> np.ndarray:
    data = getattr(value, "data", value)
    return np.asarray(data)


def write_mft(path, tensors: Mapping[str, object]) -> None:
    seen = set()
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        if name in seen:
            raise FormatError(f"duplicate entry name {name!r}")
        seen.add(name)
        try:
            raw = name.encode("ascii")
        except UnicodeEncodeError:
            raise FormatError(f"entry name {name!r} is not ASCII") from None
        if not raw or len(raw) > 0xFFFF:
            raise FormatError(f"entry name length {len(raw)} out of range")
        arr = _as_array(value)
        if arr.dtype not in _CODES:
            raise FormatError(f"entry {name!r}: unsupported dtype {arr.dtype}")
        if arr.ndim > 255:
            raise FormatError(f"entry {name!r}: rank {arr.ndim} exceeds 255")
        code = _CODES[arr.dtype]
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<BB", code, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes(order="C"))
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        for c in chunks:
            fh.write(c)
    os.replace(tmp, path)


def _read_exact(fh: BinaryIO, n: int, what: str, entry: str | None) -> bytes:
    offset = fh.tell()
    buf = fh.read(n)
    if len(buf) != n:
        where = f" in entry {entry!r}" if entry else ""
        raise FormatError(f"truncated file: expected {n} bytes of {what}{where} at byte offset {offset}, got {len(buf)}")
    return buf


def _scan(fh: BinaryIO, load: bool):
    head = _read_exact(fh, 4, "magic", None)
    if head != MAGIC:
        raise FormatError(f"bad magic {head!r} at byte offset 0")
    version, count = struct.unpack("<II", _read_exact(fh, 8, "header", None))
    if version != VERSION:
        raise FormatError(f"unsupported format version {version} at byte offset 4")
    infos: OrderedDict[str, EntryInfo] = OrderedDict()
    arrays: OrderedDict[str, np.ndarray] = OrderedDict()
    for k in range(count):
        (nlen,) = struct.unpack("<H", _read_exact(fh, 2, "name length", f"#{k}"))
        start = fh.tell()
        raw = _read_exact(fh, nlen, "name", f"#{k}")
        try:
            name = raw.decode("ascii")
        except UnicodeDecodeError:
            raise FormatError(f"entry #{k} name is not ASCII at byte offset {start}") from None
        if name in infos:
            raise FormatError(f"duplicate entry {name!r} at byte offset {start}")
        code_at = fh.tell()
        code, rank = struct.unpack("<BB", _read_exact(fh, 2, "dtype/rank", name))
        if code not in DTYPES:
            raise FormatError(f"entry {name!r}: unknown dtype code {code} at byte offset {code_at}")
        dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, "dims", name))
        info = EntryInfo(name, DTYPES[code], tuple(int(x) for x in dims), fh.tell())
        infos[name] = info
        if load:
            buf = _read_exact(fh, info.nbytes, "payload", name)
            arrays[name] = np.frombuffer(buf, dtype=info.dtype).reshape(info.dims).astype(info.dtype.newbyteorder("="))
        else:
            end = fh.seek(0, os.SEEK_END)
            if info.offset + info.nbytes > end:
                raise FormatError(
                    f"truncated file: entry {name!r} payload needs {info.nbytes} bytes at byte offset "
                    f"{info.offset}, file ends at {end}")
            fh.seek(info.offset + info.nbytes)
    trailing = fh.read(1)
    if trailing:
        raise FormatError(f"unexpected trailing bytes at byte offset {fh.tell() - 1}")
    return infos, arrays


def read_mft(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        return _scan(fh, load=True)[1]


def read_mft_header(path) -> "OrderedDict[str, EntryInfo]":
    """Entry metadata without loading payloads."""
    with open(path, "rb") as fh:
        return _scan(fh, load=False)[0]


def read_mft_entry(path, name: str) -> np.ndarray:
    info = read_mft_header(path).get(name)
    if info is None:
        raise FormatError(f"{os.fspath(path)}: no entry named {name!r}")
    with open(path, "rb") as fh:
        fh.seek(info.offset)
        buf = _read_exact(fh, info.nbytes, "payload", name)
    return np.frombuffer(buf, dtype=info.dtype).reshape(info.dims).astype(info.dtype.newbyteorder("="))

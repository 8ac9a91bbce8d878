"""Checksummed key-value record files.

Layout (all integers little-endian)::

    "NRST" | version u8
    repeated:
        payload_len u64 | payload | crc32(payload) u32

    payload = field_count u16, then per field:
        name_len u16 | name utf-8 | kind u8
        [kind == 2 only: ndim u32 | dims u32 * ndim]
        value_len u32 | value bytes

Field kinds: 0 raw bytes, 1 UTF-8 string, 2 float32 array.
"""
from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from ..errors import RecordCorruptionError, RecordTruncationError

MAGIC = b"NRST"
VERSION = 1

KIND_BYTES, KIND_UTF8, KIND_F32 = 0, 1, 2


def encode_entry(entry: dict) -> bytes:
    if not entry:
        raise ValueError("a record needs at least one field")
    parts = [struct.pack("<H", len(entry))]
    for name, value in entry.items():
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_b)) + name_b)
        if isinstance(value, str):
            body = value.encode("utf-8")
            parts.append(struct.pack("<BI", KIND_UTF8, len(body)) + body)
        elif isinstance(value, (bytes, bytearray, memoryview)):
            body = bytes(value)
            parts.append(struct.pack("<BI", KIND_BYTES, len(body)) + body)
        else:
            arr = np.asarray(value, dtype="<f4")
            body = arr.tobytes()
            parts.append(struct.pack("<BI", KIND_F32, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            parts.append(struct.pack("<I", len(body)) + body)
    return b"".join(parts)


def decode_entry(payload: bytes) -> dict:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(payload):
            raise ValueError("payload ends mid-field")
        chunk = payload[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<H", take(2))
    entry = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (kind,) = struct.unpack("<B", take(1))
        if kind == KIND_F32:
            (ndim,) = struct.unpack("<I", take(4))
            dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        (size,) = struct.unpack("<I", take(4))
        body = take(size)
        if kind == KIND_UTF8:
            entry[name] = body.decode("utf-8")
        elif kind == KIND_BYTES:
            entry[name] = body
        elif kind == KIND_F32:
            entry[name] = np.frombuffer(body, dtype="<f4").reshape(dims).astype(np.float32)
        else:
            raise ValueError(f"unknown field kind {kind}")
    if pos != len(payload):
        raise ValueError("trailing bytes after last field")
    return entry


def write_records(entries, path) -> int:
    count = 0
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<B", VERSION))
        for entry in entries:
            payload = encode_entry(entry)
            f.write(struct.pack("<Q", len(payload)))
            f.write(payload)
            f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
            count += 1
    return count


def read_records(path):
    """Yield entries in file order, validating each record's CRC32.

    A zero-byte file is an empty stream.
    """
    with open(path, "rb") as f:
        head = f.read(5)
        if not head:
            return
        if len(head) < 5 or head[:4] != MAGIC:
            raise RecordCorruptionError(f"{path}: bad magic header", index=None)
        if head[4] != VERSION:
            raise RecordCorruptionError(f"{path}: unsupported record format version {head[4]}", index=None)
        total = os.fstat(f.fileno()).st_size
        index = 0
        while True:
            raw_len = f.read(8)
            if not raw_len:
                return
            if len(raw_len) < 8:
                raise RecordTruncationError(f"{path}: truncated length prefix at record {index}", index)
            (size,) = struct.unpack("<Q", raw_len)
            if size > total - f.tell():
                # never allocate for a length the file cannot hold
                raise RecordTruncationError(f"{path}: record {index} claims {size} bytes past the end", index)
            payload = f.read(size)
            crc = f.read(4)
            if len(payload) < size or len(crc) < 4:
                raise RecordTruncationError(f"{path}: record {index} is truncated", index)
            if zlib.crc32(payload) & 0xFFFFFFFF != struct.unpack("<I", crc)[0]:
                raise RecordCorruptionError(f"{path}: checksum mismatch at record {index}", index)
            try:
                yield decode_entry(payload)
            except (ValueError, UnicodeDecodeError, struct.error) as exc:
                raise RecordCorruptionError(f"{path}: malformed payload at record {index}: {exc}", index) from exc
            index += 1

"""CLCB container: header, match records, hyper payload, slice payloads."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from ..errors import MalformedBitstream

__all__ = ["Header", "Bitstream", "write_bitstream", "read_bitstream", "MAGIC", "VERSION"]

MAGIC = b"CLCB"
VERSION = 1
_FIXED = struct.Struct("<4sHIIBBBBfBff32s")


@dataclass
class Header:
    width: int
    height: int
    channels: int
    p: int
    m: int
    k: int
    step: float
    window: int
    w0: float
    w1: float
    dict_hash: bytes
    entry_ids: list[int] = field(default_factory=list)


@dataclass
class Bitstream:
    header: Header
    records: bytes
    hyper: bytes
    slices: list[bytes]

    def section_sizes(self) -> dict[str, int]:
        """Byte count of each part, length fields included."""
        h = self.header
        return {
            "header": _FIXED.size + 1 + 4 * len(h.entry_ids),
            "records": 4 + len(self.records),
            "hyper": 4 + len(self.hyper),
            "slices": sum(4 + len(s) for s in self.slices),
        }


def write_bitstream(bs: Bitstream) -> bytes:
    h = bs.header
    if len(h.dict_hash) != 32:
        raise ValueError("dictionary hash must be 32 bytes")
    if len(bs.slices) != h.k:
        raise ValueError("slice count does not match the header")
    parts = [
        _FIXED.pack(
            MAGIC, VERSION, h.width, h.height, h.channels, h.p, h.m, h.k,
            h.step, h.window, h.w0, h.w1, h.dict_hash,
        ),
        struct.pack("<B", len(h.entry_ids)),
        struct.pack(f"<{len(h.entry_ids)}I", *h.entry_ids),
    ]
    for chunk in (bs.records, bs.hyper, *bs.slices):
        parts.append(struct.pack("<I", len(chunk)))
        parts.append(bytes(chunk))
    return b"".join(parts)


def read_bitstream(data: bytes) -> Bitstream:
    """Parse a CLCB stream; any inconsistency raises :class:`MalformedBitstream`."""
    data = bytes(data)
    if len(data) < _FIXED.size:
        raise MalformedBitstream("stream shorter than its fixed header")
    (magic, version, width, height, channels, p, m, k, step, window, w0, w1, dict_hash) = _FIXED.unpack_from(data)
    if magic != MAGIC:
        raise MalformedBitstream(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedBitstream(f"unsupported stream version {version}")
    if width == 0 or height == 0 or channels not in (1, 3) or p == 0 or k == 0:
        raise MalformedBitstream("header describes an empty or unsupported image")
    if not step > 0:
        raise MalformedBitstream("quantization step must be positive")
    pos = _FIXED.size

    def need(n):
        if pos + n > len(data):
            raise MalformedBitstream("stream truncated")

    need(1)
    (m2,) = struct.unpack_from("<B", data, pos)
    pos += 1
    if m2 != m:
        raise MalformedBitstream("reference count fields disagree")
    need(4 * m)
    ids = list(struct.unpack_from(f"<{m}I", data, pos))
    pos += 4 * m
    chunks = []
    for _ in range(2 + k):
        need(4)
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        need(n)
        chunks.append(data[pos:pos + n])
        pos += n
    if pos != len(data):
        raise MalformedBitstream(f"{len(data) - pos} trailing bytes after the last slice")
    header = Header(width, height, channels, p, m, k, step, window, w0, w1, dict_hash, ids)
    return Bitstream(header, chunks[0], chunks[1], chunks[2:])

"""Binary PPM (P6) and PGM (P5) reading and writing, 8-bit only."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ImageFormatError

__all__ = ["image_read", "image_write", "decode_pnm", "encode_pnm"]


def _tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping comments."""
    out, pos, n = [], 2, len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError("malformed PNM header")
        out.append(int(data[start:pos]))
    if pos >= n or not data[pos:pos + 1].isspace():
        raise ImageFormatError("PNM header must end with one whitespace byte")
    return out, pos + 1


def decode_pnm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported PNM magic {magic!r}")
    (w, h, maxval), pos = _tokens(data, 3)
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}")
    if w == 0 or h == 0:
        raise ImageFormatError("image has zero size")
    ch = 3 if magic == b"P6" else 1
    need = w * h * ch
    body = data[pos:]
    if len(body) != need:
        raise ImageFormatError(f"expected {need} pixel bytes, found {len(body)}")
    img = np.frombuffer(body, dtype=np.uint8).reshape(h, w, ch)
    return img.copy() if ch == 3 else img[:, :, 0].copy()


def encode_pnm(image) -> bytes:
    a = np.asarray(image)
    if a.dtype != np.uint8:
        raise ImageFormatError("only 8-bit images can be written")
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim == 2:
        magic = b"P5"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6"
    else:
        raise ImageFormatError(f"cannot write an image of shape {a.shape}")
    h, w = a.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(a).tobytes()


def image_read(path) -> np.ndarray:
    """(h, w, 3) for P6 and (h, w) for P5, dtype uint8."""
    return decode_pnm(Path(path).read_bytes())


def image_write(path, image) -> None:
    Path(path).write_bytes(encode_pnm(image))

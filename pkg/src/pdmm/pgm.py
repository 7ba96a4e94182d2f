"""Minimal reader and writer for portable graymap (PGM) images."""

from __future__ import annotations

import numpy as np

__all__ = ["PgmError", "read_image", "write_image", "parse_pgm", "encode_pgm"]


class PgmError(ValueError):
    pass


def _header_tokens(data: bytes, count: int):
    """Return ``count`` header tokens and the offset just after the last one."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise PgmError("truncated header")
        if data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def parse_pgm(data: bytes) -> np.ndarray:
    """Decode P2 or P5 bytes to a float image in ``[0, 1]``."""
    tokens, pos = _header_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise PgmError(f"unsupported magic number {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PgmError("malformed header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise PgmError("invalid dimensions or maxval")
    count = width * height
    if magic == b"P5":
        body = data[pos + 1 :]  # exactly one whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        if len(body) < count * dtype.itemsize:
            raise PgmError("truncated pixel data")
        pixels = np.frombuffer(body, dtype=dtype, count=count).astype(float)
    else:
        words = data[pos:].split()
        if len(words) < count:
            raise PgmError("truncated pixel data")
        try:
            pixels = np.array([int(w) for w in words[:count]], dtype=float)
        except ValueError as exc:
            raise PgmError("non-numeric pixel value") from exc
    if pixels.max(initial=0) > maxval:
        raise PgmError("pixel value exceeds maxval")
    return pixels.reshape(height, width) / maxval


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def encode_pgm(image, binary: bool = True, maxval: int = 255) -> bytes:
    """Quantize an image with values in ``[0, 1]`` and encode it."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    if img.ndim != 2:
        raise PgmError("image must be 2-D")
    q = np.rint(img * maxval).astype(int)
    height, width = q.shape
    magic = "P5" if binary else "P2"
    header = f"{magic}\n{width} {height}\n{maxval}\n".encode("ascii")
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        return header + q.astype(dtype).tobytes()
    rows = "\n".join(" ".join(str(v) for v in row) for row in q)
    return header + rows.encode("ascii") + b"\n"


def write_image(path, image, binary: bool = True, maxval: int = 255) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image, binary=binary, maxval=maxval))

"""PGM images and CSV exports for grid functions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .lattice import GridDomain, GridFunction


@dataclass
class IntensityMap:
    """Affine map ``value = scale * raw + offset`` applied when reading an image."""

    scale: float
    offset: float
    maxval: int

    def to_raw(self, values):
        return (np.asarray(values, dtype=float) - self.offset) / self.scale


def _tokens(data: bytes, count: int):
    """First ``count`` whitespace tokens of a PNM header (comments skipped) and the end position."""
    toks, pos, n = [], 0, len(data)
    while len(toks) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise ConfigurationError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        toks.append(data[start:pos])
    return toks, pos


def read_pgm(path):
    """Read a P2 or P5 image as floats in ``[0, 1]``.

    Returns ``(array, IntensityMap)``; the array has shape ``(rows, cols)``.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    toks, pos = _tokens(data, 4)
    magic = toks[0]
    try:
        width, height, maxval = (int(t) for t in toks[1:4])
    except ValueError as exc:
        raise ConfigurationError("bad PGM header") from exc
    if maxval not in (255, 65535) and not 0 < maxval < 65536:
        raise ConfigurationError(f"unsupported maxval {maxval}")
    count = width * height
    if magic == b"P2":
        body = data[pos:].split()
        if len(body) < count:
            raise ConfigurationError("truncated P2 data")
        raw = np.array([int(t) for t in body[:count]], dtype=float)
    elif magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        buf = data[pos:pos + count * dtype.itemsize]
        if len(buf) < count * dtype.itemsize:
            raise ConfigurationError("truncated P5 data")
        raw = np.frombuffer(buf, dtype=dtype).astype(float)
    else:
        raise ConfigurationError(f"not a PGM file (magic {magic!r})")
    mapping = IntensityMap(1.0 / maxval, 0.0, maxval)
    return raw.reshape(height, width) * mapping.scale + mapping.offset, mapping


def write_pgm(path, values, maxval: int = 255, binary: bool = True, vrange=(0.0, 1.0)):
    """Write an array to PGM, mapping ``vrange`` affinely onto ``[0, maxval]`` (clipped)."""
    a = np.asarray(values, dtype=float)
    if a.ndim != 2:
        raise ValueError("PGM output needs a 2-D array")
    lo, hi = vrange
    span = hi - lo if hi > lo else 1.0
    raw = np.clip(np.rint((a - lo) / span * maxval), 0, maxval).astype(int)
    height, width = a.shape
    header = f"{'P5' if binary else 'P2'}\n{width} {height}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            dtype = ">u2" if maxval > 255 else "u1"
            fh.write(raw.astype(dtype).tobytes())
        else:
            for row in raw:
                fh.write((" ".join(str(v) for v in row) + "\n").encode())


def grid_function_from_image(image, h: float = 1.0) -> GridFunction:
    """Image axis 0 becomes ``x_1``; the domain is the full rectangle of pixels."""
    img = np.asarray(image, dtype=float)
    dom = GridDomain(h, (0,) * img.ndim, np.ones(img.shape, dtype=bool))
    return GridFunction(dom, img)


def grid_function_csv(u: GridFunction, header: str = "") -> str:
    """CSV with ``x_1, ..., x_N, value`` per cell of the domain (node coordinates)."""
    buf = io.StringIO()
    if header:
        buf.write(header.rstrip("\n") + "\n")
    w = csv.writer(buf, lineterminator="\n")
    dom = u.domain
    w.writerow([f"x_{i + 1}" for i in range(dom.dim)] + ["value"])
    coords = dom.node_coords()[dom.inside]
    for x, v in zip(coords, u.cell_values()):
        w.writerow([repr(float(c)) for c in x] + [repr(float(v))])
    return buf.getvalue()


def write_csv(path, columns, rows, header: str = ""):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])

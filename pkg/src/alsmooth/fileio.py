"""Small file-format helpers shared across the package.

Binary portable graymaps (P5) for image and mask rasters, JSON-lines for
annotations, and round-trip-exact float formatting for CSV output.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def write_pgm(path, raster: np.ndarray) -> None:
    """Write a 2-D uint8 array as a binary (P5) portable graymap."""
    arr = np.ascontiguousarray(raster, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError(f"PGM raster must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) portable graymap into a 2-D uint8 array."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # exactly one whitespace byte after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    if len(data) - pos < w * h:
        raise ValueError(f"{path}: truncated pixel data")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return raster.reshape(h, w).copy()


def quantize_unit(raster: np.ndarray) -> np.ndarray:
    """Map a [0, 1] float raster onto the 256-level grid used on disk."""
    return np.round(np.clip(raster, 0.0, 1.0) * 255.0).astype(np.uint8)


def dequantize_unit(raster: np.ndarray) -> np.ndarray:
    """Inverse of :func:`quantize_unit`; returns float32 in [0, 1]."""
    return raster.astype(np.float32) / np.float32(255.0)


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def fmt_float(x) -> str:
    """Shortest decimal string that round-trips the value exactly."""
    return repr(float(x))

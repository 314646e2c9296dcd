"""Versioned binary weights container.

Layout (all integers little-endian uint32, floats little-endian float64):

    magic "PNW1" | entry count
    per entry: name length | name (utf-8) | ndim | dims... | raw float64 data

Entry order is preserved, so saving a freshly loaded file reproduces it
byte for byte.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"PNW1"


def save_weights(path, weights: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(weights)))
        for name, arr in weights.items():
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.tobytes())


def load_weights(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"not a weights file: {path}")
        (count,) = struct.unpack("<I", fh.read(4))
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n_values = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * n_values), dtype="<f8")
            out[name] = data.reshape(shape).astype(np.float64)
        return out

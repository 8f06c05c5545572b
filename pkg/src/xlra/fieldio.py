"""XFD1 binary field files.

Layout (little-endian): magic ``XFD1``, ndim (u8), dims (u32 each),
n_components (u16), mean values (f8 each), labels (u16 byte length + utf-8
each), then f8 payload in row-major cell order with components fastest.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .elasticity import StrainField, StressField, TensorField
from .microstructure import _atomic_write

FIELD_MAGIC = b"XFD1"


class FieldFormatError(ValueError):
    pass


def write_field(path, values, mean=None, labels=None):
    """Write a ``(n_components, *dims)`` array (or TensorField) atomically."""
    if isinstance(values, TensorField):
        mean = values.mean if mean is None else mean
        labels = values.labels if labels is None else labels
        values = values.values
    values = np.asarray(values, dtype=float)
    nc, dims = values.shape[0], values.shape[1:]
    mean = np.zeros(nc) if mean is None else np.asarray(mean, dtype=float).ravel()
    labels = tuple(f"c{i}" for i in range(nc)) if labels is None else tuple(labels)
    if mean.shape != (nc,) or len(labels) != nc:
        raise FieldFormatError("mean and labels need one entry per component")
    parts = [FIELD_MAGIC, struct.pack("<B", len(dims)), struct.pack(f"<{len(dims)}I", *dims),
             struct.pack("<H", nc), mean.astype("<f8").tobytes()]
    for lab in labels:
        b = lab.encode("utf-8")
        parts.append(struct.pack("<H", len(b)) + b)
    parts.append(np.moveaxis(values, 0, -1).astype("<f8").tobytes(order="C"))
    _atomic_write(path, b"".join(parts))


def read_field(path):
    """Return ``(values, mean, labels)`` with values shaped ``(n_components, *dims)``."""
    data = Path(path).read_bytes()
    if data[:4] != FIELD_MAGIC:
        raise FieldFormatError(f"{path}: bad magic {data[:4]!r}")
    ndim = data[4]
    off = 5
    dims = struct.unpack_from(f"<{ndim}I", data, off)
    off += 4 * ndim
    (nc,) = struct.unpack_from("<H", data, off)
    off += 2
    mean = np.frombuffer(data, "<f8", nc, off).copy()
    off += 8 * nc
    labels = []
    for _ in range(nc):
        (ln,) = struct.unpack_from("<H", data, off)
        off += 2
        labels.append(data[off:off + ln].decode("utf-8"))
        off += ln
    n = int(np.prod(dims)) * nc
    if len(data) - off != 8 * n:
        raise FieldFormatError(f"{path}: payload size mismatch")
    vals = np.frombuffer(data, "<f8", n, off).reshape(tuple(dims) + (nc,))
    return np.ascontiguousarray(np.moveaxis(vals, -1, 0)), mean, tuple(labels)


def read_tensor_field(path):
    values, mean, labels = read_field(path)
    cls = StressField if labels and labels[0].startswith("s") else StrainField
    return cls(values, mean, labels)

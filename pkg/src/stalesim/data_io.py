"""Dataset import/export.

Binary layout (all fields little-endian):

========  =======  ==========================================
offset    size     content
========  =======  ==========================================
0         8        magic ``b"SSIMDS1\\n"``
8         8        n_samples, unsigned 64-bit
16        8        dimension, unsigned 64-bit
24        8        n_classes, unsigned 64-bit (0 = none)
32        8*n*d    feature matrix, float64, row-major
...       8*n      labels, signed 64-bit
========  =======  ==========================================

The CSV form (``feature_0,...,feature_{d-1},label``) is for human
inspection only; the binary form is the canonical one.
"""

from __future__ import annotations

import csv
import os
import struct

import numpy as np

from .errors import RunIOError
from .models import Dataset

__all__ = ["write_dataset", "read_dataset", "write_dataset_csv", "atomic_write_bytes"]

MAGIC = b"SSIMDS1\n"
_HEADER = struct.Struct("<8sQQQ")


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write via a temp file in the same directory, then rename over the target."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp.{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise RunIOError(f"cannot write {path}: {exc}") from exc


def write_dataset(path: str, dataset: Dataset) -> None:
    header = _HEADER.pack(MAGIC, len(dataset), dataset.dimension, dataset.n_classes)
    feats = np.ascontiguousarray(dataset.features, dtype="<f8")
    labels = np.ascontiguousarray(dataset.labels, dtype="<i8")
    atomic_write_bytes(path, header + feats.tobytes() + labels.tobytes())


def read_dataset(path: str) -> Dataset:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise RunIOError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise RunIOError(f"{path}: truncated header")
    magic, n, d, c = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise RunIOError(f"{path}: not a dataset file (bad magic {magic!r})")
    need = _HEADER.size + 8 * n * d + 8 * n
    if len(blob) != need:
        raise RunIOError(f"{path}: expected {need} bytes, found {len(blob)}")
    feats = np.frombuffer(blob, dtype="<f8", count=n * d, offset=_HEADER.size)
    labels = np.frombuffer(blob, dtype="<i8", count=n, offset=_HEADER.size + 8 * n * d)
    return Dataset(feats.reshape(n, d).copy(), labels.copy(), c)


def write_dataset_csv(path: str, dataset: Dataset) -> None:
    rows = []
    header = [f"feature_{k}" for k in range(dataset.dimension)] + ["label"]
    for i in range(len(dataset)):
        rows.append([repr(float(v)) for v in dataset.features[i]] + [str(dataset.labels[i])])
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise RunIOError(f"cannot write {path}: {exc}") from exc

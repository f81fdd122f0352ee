"""Dataset readers, preprocessing and seeded minibatch iteration."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InputError

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
_IDX_NDIM = {IDX_LABELS: 1, IDX_IMAGES: 3}


@dataclass
class Dataset:
    X: np.ndarray
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]


def read_idx(path) -> np.ndarray:
    """Parse an unsigned-byte IDX file (images or labels) into a uint8 array."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic >> 8 != 0x08:
        raise DataFormatError(f"{path}: unsupported element type or bad magic 0x{magic:08x}")
    ndim = magic & 0xFF
    if magic not in _IDX_NDIM:
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x}")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise DataFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    expected = int(np.prod(dims))
    payload = raw[header_end:]
    if len(payload) < expected:
        raise DataFormatError(f"{path}: payload has {len(payload)} bytes, header declares {expected}")
    if len(payload) > expected:
        raise DataFormatError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()


def write_idx(path, array) -> None:
    """Write a uint8 array of 1 (labels) or 3 (images) dimensions as IDX."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise InputError("IDX writer only supports uint8 arrays")
    magic = {1: IDX_LABELS, 3: IDX_IMAGES}.get(array.ndim)
    if magic is None:
        raise InputError("IDX arrays must have 1 or 3 dimensions")
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(array).tobytes())


def read_delimited(path, delimiter=None, skip_header=False, rescale=None) -> np.ndarray:
    """Numeric text matrix, comma- or whitespace-separated.

    ``delimiter=None`` sniffs commas on the first data line.  ``rescale``
    divides every value (e.g. 255 for byte-valued text).
    """
    lines = Path(path).read_text().splitlines()
    body = [ln for ln in lines[1 if skip_header else 0 :] if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    if delimiter is None:
        delimiter = "," if "," in body[0] else None
    try:
        rows = [[float(v) for v in ln.split(delimiter)] for ln in body]
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric entry ({exc})") from exc
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataFormatError(f"{path}: inconsistent row lengths {sorted(widths)}")
    X = np.array(rows)
    return X / rescale if rescale else X


def preprocess(raw, mode="binarize") -> np.ndarray:
    """Flatten samples to rows and scale to ``[0, 1]``.

    Byte input is divided by 255, real input is taken as already scaled.
    ``binarize`` thresholds strictly above one half.
    """
    raw = np.asarray(raw)
    X = raw.reshape(raw.shape[0], -1) if raw.ndim > 1 else raw.reshape(1, -1)
    X = X / 255.0 if raw.dtype == np.uint8 else X.astype(float)
    if mode == "normalize01":
        return X
    if mode == "binarize":
        return (X > 0.5).astype(float)
    raise InputError(f"unknown preprocessing mode {mode!r}")


def load_dataset(path, mode="binarize", labels_path=None, limit=None, **text_opts) -> Dataset:
    """Read IDX (by magic) or delimited text and preprocess it."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if len(head) == 4 and struct.unpack(">I", head)[0] in _IDX_NDIM:
        raw = read_idx(path)
        fmt = "idx"
    else:
        raw = read_delimited(path, **text_opts)
        fmt = "text"
    X = preprocess(raw, mode)
    labels = read_idx(labels_path) if labels_path else None
    if limit is not None:
        X = X[:limit]
        labels = labels[:limit] if labels is not None else None
    return Dataset(X, labels, {"path": str(path), "format": fmt, "mode": mode, "rows": X.shape[0]})


def epoch_rng(seed, epoch):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch)]))


def minibatch_indices(n_rows, M, seed, epoch):
    """Shuffled partition of ``range(n_rows)`` into batches of ``M`` (last may be short)."""
    if M < 1:
        raise InputError("batch size must be at least 1")
    order = epoch_rng(seed, epoch).permutation(n_rows)
    return [order[i : i + M] for i in range(0, n_rows, M)]


def minibatches(data, M, seed, epoch):
    for idx in minibatch_indices(data.shape[0], M, seed, epoch):
        yield data[idx]

"""
fvecs / ivecs readers and writers (standard ANN-benchmark interchange)

Record layout: little-endian int32 dimension d, then d little-endian
32-bit values (float32 for fvecs, int32 for ivecs), repeated n times.
"""

from pathlib import Path
from typing import Optional, Union

import numpy as np
from loguru import logger

from .embeddings import EmbeddingSet
from .exceptions import FormatError

PathLike = Union[str, Path]


def _parse_vecs(buffer: bytes, path: str) -> np.ndarray:
    """Split a vecs buffer into an (n, d) int32 matrix of raw 32-bit words"""
    if len(buffer) == 0:
        raise FormatError("empty file", offset=0, path=path)
    if len(buffer) < 4:
        raise FormatError("truncated dimension header", offset=0, path=path)

    d = int(np.frombuffer(buffer[:4], dtype="<i4")[0])
    if d <= 0:
        raise FormatError(f"invalid record dimension {d}", offset=0, path=path)

    record_bytes = 4 * (d + 1)
    full = len(buffer) // record_bytes
    words = np.frombuffer(buffer[:full * record_bytes], dtype="<i4").reshape(full, d + 1)

    headers = words[:, 0]
    mismatched = np.flatnonzero(headers != d)
    if mismatched.size:
        row = int(mismatched[0])
        raise FormatError(
            f"inconsistent record dimension {int(headers[row])} (expected {d})",
            offset=row * record_bytes,
            path=path,
        )

    remainder = len(buffer) - full * record_bytes
    if remainder:
        offset = full * record_bytes
        if remainder >= 4:
            claimed = int(np.frombuffer(buffer[offset:offset + 4], dtype="<i4")[0])
            if claimed != d:
                raise FormatError(
                    f"inconsistent record dimension {claimed} (expected {d})", offset=offset, path=path
                )
        raise FormatError(
            f"truncated record: {remainder} bytes where {record_bytes} expected", offset=offset, path=path
        )
    return words[:, 1:]


def _read_words(path: PathLike) -> np.ndarray:
    path = Path(path)
    buffer = path.read_bytes()
    return _parse_vecs(buffer, str(path))


def _write_words(words: np.ndarray, path: PathLike) -> None:
    words = np.ascontiguousarray(words, dtype="<i4")
    n, d = words.shape
    if d <= 0:
        raise FormatError("cannot write records of dimension 0", path=str(path))
    records = np.empty((n, d + 1), dtype="<i4")
    records[:, 0] = d
    records[:, 1:] = words
    Path(path).write_bytes(records.tobytes())


def read_fvecs_array(path: PathLike) -> np.ndarray:
    """Raw (n, d) float32 matrix from an fvecs file"""
    return _read_words(path).view("<f4").astype(np.float32)


def read_fvecs(path: PathLike, labels_path: Optional[PathLike] = None, name: Optional[str] = None) -> EmbeddingSet:
    """Load an fvecs file (plus optional d=1 ivecs label file) as an EmbeddingSet"""
    data = read_fvecs_array(path)
    labels = None
    if labels_path is not None:
        labels = read_labels(labels_path)
        if labels.shape[0] != data.shape[0]:
            raise FormatError(
                f"label count {labels.shape[0]} does not match vector count {data.shape[0]}",
                path=str(labels_path),
            )
    logger.debug(f"Read {data.shape[0]} x {data.shape[1]} vectors from {path}")
    return EmbeddingSet(data, labels=labels, name=name or Path(path).stem)


def write_fvecs(embeddings: Union[EmbeddingSet, np.ndarray], path: PathLike) -> None:
    """Write an EmbeddingSet or float matrix as fvecs; float bits are kept verbatim"""
    data = embeddings.data if isinstance(embeddings, EmbeddingSet) else np.atleast_2d(embeddings)
    data = np.ascontiguousarray(data, dtype="<f4")
    _write_words(data.view("<i4"), path)
    logger.debug(f"Wrote {data.shape[0]} x {data.shape[1]} vectors to {path}")


def read_ivecs(path: PathLike) -> np.ndarray:
    """(n, d) int32 matrix from an ivecs file"""
    return _read_words(path).astype(np.int32)


def write_ivecs(rows: np.ndarray, path: PathLike) -> None:
    """Write an integer matrix as ivecs"""
    rows = np.atleast_2d(np.asarray(rows))
    if not np.issubdtype(rows.dtype, np.integer):
        raise FormatError(f"ivecs payload must be integers, got {rows.dtype}", path=str(path))
    if rows.size and (rows.min() < np.iinfo(np.int32).min or rows.max() > np.iinfo(np.int32).max):
        raise FormatError("ivecs payload exceeds int32 range", path=str(path))
    _write_words(rows.astype("<i4"), path)


def read_labels(path: PathLike) -> np.ndarray:
    """Class labels stored as ivecs records of dimension 1"""
    rows = read_ivecs(path)
    if rows.shape[1] != 1:
        raise FormatError(f"label file must have d=1 records, found d={rows.shape[1]}", path=str(path))
    return rows[:, 0].astype(np.int64)


def write_labels(labels: np.ndarray, path: PathLike) -> None:
    write_ivecs(np.asarray(labels).reshape(-1, 1), path)

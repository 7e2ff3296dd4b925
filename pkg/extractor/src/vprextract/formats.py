"""Writers for the VPRF/VPRG interchange byte formats.

The re-ranking engine (``shiftrank``) consumes exactly two little-endian
binary layouts; this module produces them without importing the engine,
so the only coupling between the two packages is the bytes themselves:

VPRF (local features, one file per image)::

    magic "VPRF" | version u16 = 1 | descriptor_dim u16 |
    width u32 | height u32 | feature_count u32 |
    feature_count x [x f32 | y f32 | score f32 | descriptor_dim x f32]

VPRG (global descriptors, many images per file)::

    magic "VPRG" | version u16 = 1 | dim u32 | count u32 |
    count x [id_len u16 | id UTF-8 | dim x f32]

Everything is validated on the stored float32 values before writing:
positions inside the image, scores non-negative, descriptors unit-norm
within 1e-4. The reader silently repairs drift in (1e-4, 1e-3] with a
warning; an adapter that triggers those warnings is mis-serializing, so
here that is an error instead.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

VPRF_MAGIC = b"VPRF"
VPRG_MAGIC = b"VPRG"
FORMAT_VERSION = 1
NORM_TOLERANCE = 1e-4

_VPRF_HEADER = struct.Struct("<4sHHIII")  # magic, version, dim, width, height, count
_VPRG_HEADER = struct.Struct("<4sHII")  # magic, version, dim, count

_MAX_U16 = 0xFFFF
_MAX_U32 = 0xFFFFFFFF


def _check_unit_norms(vectors: np.ndarray, what: str) -> None:
    """Reject stored vectors whose float32 norm drifts from 1 by > 1e-4."""
    if not np.all(np.isfinite(vectors)):
        raise FormatError(f"non-finite value in {what}")
    if vectors.shape[0] == 0:
        return
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    drift = np.abs(norms - 1.0)
    if np.any(drift > NORM_TOLERANCE):
        bad = int(np.argmax(drift))
        raise FormatError(
            f"{what} {bad} has norm {norms[bad]:.6f}; the stored float32 "
            f"values must be unit within {NORM_TOLERANCE}")


def write_features(path, *, width: int, height: int, positions, scores,
                   descriptors, descriptor_dim: int | None = None) -> None:
    """Serialize one image's local features to ``path`` in the VPRF layout.

    Arrays are cast to float32 first and validated as stored, so a file
    this function writes always passes the engine's loader without
    renormalization. ``descriptor_dim`` is only needed when the feature
    set is empty (the header still records the detector's width).
    """
    if not 1 <= int(width) <= _MAX_U32 or not 1 <= int(height) <= _MAX_U32:
        raise FormatError(f"image size {width}x{height} is not representable")
    positions = np.ascontiguousarray(positions, dtype="<f4").reshape(-1, 2)
    scores = np.ascontiguousarray(scores, dtype="<f4").reshape(-1)
    descriptors = np.ascontiguousarray(descriptors, dtype="<f4")
    n = positions.shape[0]
    if descriptors.ndim != 2:
        descriptors = descriptors.reshape(n, -1)
    if scores.shape[0] != n or descriptors.shape[0] != n:
        raise FormatError("positions, scores and descriptors disagree on count")

    dim = descriptors.shape[1] if n else descriptor_dim
    if dim is None:
        raise FormatError("descriptor_dim is required for an empty feature set")
    dim = int(dim)
    if not 1 <= dim <= _MAX_U16:
        raise FormatError(f"descriptor_dim {dim} outside [1, {_MAX_U16}]")
    if n and descriptors.shape[1] != dim:
        raise FormatError(
            f"descriptors have dim {descriptors.shape[1]}, expected {dim}")

    if n:
        x, y = positions[:, 0], positions[:, 1]
        if not np.all(np.isfinite(positions)):
            raise FormatError("non-finite feature position")
        if np.any(x < 0) or np.any(x >= width) or np.any(y < 0) or np.any(y >= height):
            bad = int(np.argmax((x < 0) | (x >= width) | (y < 0) | (y >= height)))
            raise FormatError(
                f"feature {bad} position ({x[bad]}, {y[bad]}) outside "
                f"{width}x{height} image")
        if not np.all(np.isfinite(scores)) or np.any(scores < 0):
            raise FormatError("feature score negative or non-finite")
        _check_unit_norms(descriptors, "descriptor")

    records = np.empty((n, 3 + dim), dtype="<f4")
    if n:
        records[:, 0:2] = positions
        records[:, 2] = scores
        records[:, 3:] = descriptors
    header = _VPRF_HEADER.pack(VPRF_MAGIC, FORMAT_VERSION, dim,
                               int(width), int(height), n)
    Path(path).write_bytes(header + records.tobytes())


def write_globals(path, entries) -> None:
    """Serialize ``(image_id, vector)`` pairs to ``path`` in the VPRG layout.

    All vectors must share one dimension and be unit-norm as stored;
    image ids must be unique, non-empty, and at most 65535 UTF-8 bytes.
    """
    entries = [(str(image_id), np.ascontiguousarray(vec, dtype="<f4").reshape(-1))
               for image_id, vec in entries]
    dim = entries[0][1].shape[0] if entries else 0
    seen: set[str] = set()
    chunks = [_VPRG_HEADER.pack(VPRG_MAGIC, FORMAT_VERSION, dim, len(entries))]
    for image_id, vec in entries:
        if not image_id:
            raise FormatError("empty image id")
        if image_id in seen:
            raise FormatError(f"duplicate image id {image_id!r}")
        seen.add(image_id)
        if vec.shape[0] != dim:
            raise FormatError(
                f"descriptor for {image_id!r} has dim {vec.shape[0]}, expected {dim}")
        _check_unit_norms(vec[None, :], f"global descriptor {image_id!r}")
        ident = image_id.encode("utf-8")
        if len(ident) > _MAX_U16:
            raise FormatError(f"image id {image_id[:32]!r}... longer than 65535 bytes")
        chunks.append(struct.pack("<H", len(ident)))
        chunks.append(ident)
        chunks.append(vec.tobytes())
    Path(path).write_bytes(b"".join(chunks))

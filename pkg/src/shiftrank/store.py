"""On-disk interchange formats and the read-only feature database.

Two custom little-endian binary formats carry everything the engine
consumes, so data produced by any extractor flows through one code path:

VPRF (local features, one file per image)::

    magic "VPRF" | version u16 = 1 | descriptor_dim u16 |
    width u32 | height u32 | feature_count u32 |
    feature_count x [x f32 | y f32 | score f32 | descriptor_dim x f32]

VPRG (global descriptors, many images per file)::

    magic "VPRG" | version u16 = 1 | dim u32 | count u32 |
    count x [id_len u16 | id UTF-8 | dim x f32]

The dataset manifest is UTF-8 JSON with keys ``reference_ids``,
``query_ids``, ``ground_truth``, ``tolerance_unit`` and optional
``positions`` (id -> [east_m, north_m]).

Loading never mutates files. Descriptors whose stored norm deviates
from 1 by more than 1e-4 are renormalized (with a
:class:`DescriptorDriftWarning`) up to a hard rejection limit of 1e-3;
descriptors within 1e-4 are kept bit-exact so that write(load(f))
reproduces f byte for byte.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DescriptorDriftWarning, FormatError, LoadError

VPRF_MAGIC = b"VPRF"
VPRG_MAGIC = b"VPRG"
FORMAT_VERSION = 1

_VPRF_HEADER = struct.Struct("<4sHHIII")  # magic, version, dim, width, height, count
_VPRG_HEADER = struct.Struct("<4sHII")  # magic, version, dim, count

# Unit-norm tolerances: invariant, silent-repair ceiling, hard rejection.
NORM_TOLERANCE = 1e-4
NORM_REJECT = 1e-3


class Feature(NamedTuple):
    """One local feature: pixel position, detector score, unit descriptor."""

    x: float
    y: float
    score: float
    descriptor: np.ndarray


@dataclass(frozen=True)
class FeatureSet:
    """All local features of one image, in detector order.

    Arrays are row-aligned: ``positions[i]``, ``scores[i]`` and
    ``descriptors[i]`` describe the same feature.
    """

    image_id: str
    width: int
    height: int
    positions: np.ndarray  # (n, 2) float32, columns x, y
    scores: np.ndarray  # (n,) float32
    descriptors: np.ndarray  # (n, descriptor_dim) float32

    @property
    def descriptor_dim(self) -> int:
        return int(self.descriptors.shape[1])

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    def feature(self, i: int) -> Feature:
        return Feature(
            float(self.positions[i, 0]),
            float(self.positions[i, 1]),
            float(self.scores[i]),
            self.descriptors[i],
        )

    def __iter__(self) -> Iterator[Feature]:
        return (self.feature(i) for i in range(len(self)))

    @staticmethod
    def build(image_id: str, width: int, height: int,
              positions, scores, descriptors) -> "FeatureSet":
        """Normalize array dtypes/shapes and validate the invariants."""
        positions = np.ascontiguousarray(positions, dtype=np.float32).reshape(-1, 2)
        scores = np.ascontiguousarray(scores, dtype=np.float32).reshape(-1)
        descriptors = np.ascontiguousarray(descriptors, dtype=np.float32)
        if descriptors.ndim != 2:
            descriptors = descriptors.reshape(len(scores), -1)
        fs = FeatureSet(image_id, int(width), int(height),
                        positions, scores, descriptors)
        _validate_feature_set(fs)
        return fs


@dataclass(frozen=True)
class GlobalDescriptor:
    """Whole-image descriptor used by the filtering stage (unit norm)."""

    image_id: str
    vector: np.ndarray  # (dim,) float32


def _validate_feature_set(fs: FeatureSet, path=None) -> None:
    n = len(fs)
    if fs.scores.shape != (n,) or fs.descriptors.shape[0] != n:
        raise FormatError("feature arrays disagree on feature count", path=path)
    if n == 0:
        return
    x, y = fs.positions[:, 0], fs.positions[:, 1]
    if not np.all(np.isfinite(fs.positions)):
        raise FormatError("non-finite feature position", path=path)
    if np.any(x < 0) or np.any(x >= fs.width) or np.any(y < 0) or np.any(y >= fs.height):
        bad = int(np.argmax((x < 0) | (x >= fs.width) | (y < 0) | (y >= fs.height)))
        raise FormatError(
            f"feature {bad} position ({x[bad]}, {y[bad]}) outside "
            f"{fs.width}x{fs.height} image", path=path)
    if not np.all(np.isfinite(fs.scores)) or np.any(fs.scores < 0):
        raise FormatError("feature score negative or non-finite", path=path)
    if not np.all(np.isfinite(fs.descriptors)):
        raise FormatError("non-finite descriptor value", path=path)
    norms = np.linalg.norm(fs.descriptors.astype(np.float64), axis=1)
    drift = np.abs(norms - 1.0)
    if np.any(drift > NORM_TOLERANCE):
        bad = int(np.argmax(drift))
        raise FormatError(
            f"descriptor {bad} norm {norms[bad]:.6f} deviates from 1 "
            f"by more than {NORM_TOLERANCE}", path=path)


def write_feature_file(fs: FeatureSet, path) -> None:
    """Serialize ``fs`` to ``path`` in the VPRF layout.

    The output is bit-identical on re-serialization of the same set.
    """
    path = Path(path)
    n = len(fs)
    dim = fs.descriptor_dim
    records = np.empty((n, 3 + dim), dtype="<f4")
    if n:
        records[:, 0:2] = fs.positions
        records[:, 2] = fs.scores
        records[:, 3:] = fs.descriptors
    header = _VPRF_HEADER.pack(VPRF_MAGIC, FORMAT_VERSION, dim,
                               fs.width, fs.height, n)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(records.tobytes())
    except OSError as exc:
        raise LoadError(f"cannot write feature file {path}: {exc}") from exc


def load_feature_file(path) -> FeatureSet:
    """Read and validate a VPRF file.

    Raises :class:`FormatError` (naming the byte offset) for bad magic,
    truncated payloads, dimension mismatches or non-finite values.
    Descriptors drifting from unit norm by (1e-4, 1e-3] are renormalized
    under a :class:`DescriptorDriftWarning`; larger drift is rejected.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise LoadError(f"cannot read feature file {path}: {exc}") from exc

    if len(raw) < _VPRF_HEADER.size:
        raise FormatError("file shorter than the fixed header",
                          path=path, offset=len(raw))
    magic, version, dim, width, height, count = _VPRF_HEADER.unpack_from(raw)
    if magic != VPRF_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {VPRF_MAGIC!r}",
                          path=path, offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", path=path, offset=4)
    if dim == 0:
        raise FormatError("descriptor_dim must be positive", path=path, offset=6)

    record_floats = 3 + dim
    expected = _VPRF_HEADER.size + count * record_floats * 4
    if len(raw) != expected:
        raise FormatError(
            f"payload holds {len(raw) - _VPRF_HEADER.size} bytes, "
            f"expected {count} records of {record_floats * 4} bytes",
            path=path, offset=min(len(raw), expected))

    records = np.frombuffer(raw, dtype="<f4", offset=_VPRF_HEADER.size)
    records = records.reshape(count, record_floats).copy()

    bad = ~np.isfinite(records)
    if bad.any():
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise FormatError("non-finite value in feature record",
                          path=path, offset=_VPRF_HEADER.size + idx * 4)

    positions = np.ascontiguousarray(records[:, 0:2])
    scores = np.ascontiguousarray(records[:, 2])
    descriptors = np.ascontiguousarray(records[:, 3:])

    if count:
        norms = np.linalg.norm(descriptors.astype(np.float64), axis=1)
        drift = np.abs(norms - 1.0)
        if np.any(drift > NORM_REJECT):
            worst = int(np.argmax(drift))
            raise FormatError(
                f"descriptor {worst} norm {norms[worst]:.6f} deviates from 1 "
                f"by more than {NORM_REJECT}",
                path=path,
                offset=_VPRF_HEADER.size + worst * record_floats * 4 + 12)
        drifting = drift > NORM_TOLERANCE
        if drifting.any():
            n_bad = int(drifting.sum())
            warnings.warn(
                f"{path}: renormalized {n_bad} descriptor(s) drifting from "
                f"unit norm by more than {NORM_TOLERANCE}",
                DescriptorDriftWarning, stacklevel=2)
            descriptors[drifting] = (
                descriptors[drifting] / norms[drifting, None]).astype(np.float32)

    fs = FeatureSet(path.stem, int(width), int(height),
                    positions, scores, descriptors)
    _validate_feature_set(fs, path=path)
    return fs


def write_descriptor_file(descriptors: Sequence[GlobalDescriptor], path) -> None:
    """Serialize global descriptors to ``path`` in the VPRG layout."""
    path = Path(path)
    if descriptors:
        dim = int(descriptors[0].vector.shape[0])
    else:
        dim = 0
    chunks = [_VPRG_HEADER.pack(VPRG_MAGIC, FORMAT_VERSION, dim, len(descriptors))]
    for gd in descriptors:
        vec = np.ascontiguousarray(gd.vector, dtype="<f4")
        if vec.shape != (dim,):
            raise FormatError(
                f"descriptor for {gd.image_id!r} has dim {vec.shape}, expected {dim}")
        ident = gd.image_id.encode("utf-8")
        chunks.append(struct.pack("<H", len(ident)))
        chunks.append(ident)
        chunks.append(vec.tobytes())
    try:
        path.write_bytes(b"".join(chunks))
    except OSError as exc:
        raise LoadError(f"cannot write descriptor file {path}: {exc}") from exc


def load_descriptor_file(path) -> list[GlobalDescriptor]:
    """Read and validate a VPRG file; returns entries in file order."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise LoadError(f"cannot read descriptor file {path}: {exc}") from exc

    if len(raw) < _VPRG_HEADER.size:
        raise FormatError("file shorter than the fixed header",
                          path=path, offset=len(raw))
    magic, version, dim, count = _VPRG_HEADER.unpack_from(raw)
    if magic != VPRG_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {VPRG_MAGIC!r}",
                          path=path, offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", path=path, offset=4)

    out: list[GlobalDescriptor] = []
    pos = _VPRG_HEADER.size
    for k in range(count):
        if pos + 2 > len(raw):
            raise FormatError(f"truncated before id of entry {k}",
                              path=path, offset=pos)
        (id_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        if pos + id_len + dim * 4 > len(raw):
            raise FormatError(f"truncated inside entry {k}", path=path, offset=pos)
        try:
            image_id = raw[pos:pos + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"entry {k} id is not UTF-8",
                              path=path, offset=pos) from exc
        pos += id_len
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos).copy()
        if not np.all(np.isfinite(vec)):
            raise FormatError(f"non-finite value in descriptor {image_id!r}",
                              path=path, offset=pos)
        norm = float(np.linalg.norm(vec.astype(np.float64)))
        drift = abs(norm - 1.0)
        if drift > NORM_REJECT:
            raise FormatError(
                f"descriptor {image_id!r} norm {norm:.6f} deviates from 1 "
                f"by more than {NORM_REJECT}", path=path, offset=pos)
        if drift > NORM_TOLERANCE:
            warnings.warn(
                f"{path}: renormalized global descriptor {image_id!r}",
                DescriptorDriftWarning, stacklevel=2)
            vec = (vec / norm).astype(np.float32)
        pos += dim * 4
        out.append(GlobalDescriptor(image_id, vec))
    if pos != len(raw):
        raise FormatError(f"{len(raw) - pos} trailing bytes after last entry",
                          path=path, offset=pos)
    return out


@dataclass(frozen=True)
class DatasetManifest:
    """Dataset index: ordered image ids, ground truth, tolerance mode."""

    reference_ids: list[str]
    query_ids: list[str]
    ground_truth: dict[str, list[int]]
    tolerance_unit: str  # "sequence_index" | "meters"
    positions: dict[str, tuple[float, float]] = field(default_factory=dict)
    sequences: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if self.tolerance_unit not in ("sequence_index", "meters"):
            raise FormatError(
                f"tolerance_unit must be 'sequence_index' or 'meters', "
                f"got {self.tolerance_unit!r}")
        if len(set(self.reference_ids)) != len(self.reference_ids):
            raise FormatError("duplicate reference ids in manifest")
        known_queries = set(self.query_ids)
        n_ref = len(self.reference_ids)
        for qid, indices in self.ground_truth.items():
            if qid not in known_queries:
                raise FormatError(f"ground_truth id {qid!r} not in query_ids")
            for idx in indices:
                if not 0 <= idx < n_ref:
                    raise FormatError(
                        f"ground_truth index {idx} for {qid!r} outside "
                        f"[0, {n_ref})")
        if self.tolerance_unit == "meters":
            for iid in (*self.reference_ids, *self.query_ids):
                if iid not in self.positions:
                    raise FormatError(
                        f"tolerance_unit is meters but {iid!r} has no position")
        for label, ids in self.sequences.items():
            for qid in ids:
                if qid not in known_queries:
                    raise FormatError(
                        f"sequence {label!r} lists unknown query {qid!r}")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise LoadError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}", path=path) from exc

    try:
        reference_ids = list(doc["reference_ids"])
        query_ids = list(doc["query_ids"])
        tolerance_unit = doc["tolerance_unit"]
    except KeyError as exc:
        raise FormatError(f"manifest missing key {exc}", path=path) from exc

    gt_raw = doc.get("ground_truth", {})
    ground_truth = {}
    for qid, val in gt_raw.items():
        ground_truth[qid] = [int(v) for v in val] if isinstance(val, list) else [int(val)]
    positions = {iid: (float(p[0]), float(p[1]))
                 for iid, p in doc.get("positions", {}).items()}
    sequences = {label: list(ids)
                 for label, ids in doc.get("sequences", {}).items()}
    return DatasetManifest(reference_ids, query_ids, ground_truth,
                           tolerance_unit, positions, sequences)


def write_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "reference_ids": manifest.reference_ids,
        "query_ids": manifest.query_ids,
        "ground_truth": manifest.ground_truth,
        "tolerance_unit": manifest.tolerance_unit,
    }
    if manifest.positions:
        doc["positions"] = {k: list(v) for k, v in manifest.positions.items()}
    if manifest.sequences:
        doc["sequences"] = manifest.sequences
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                          encoding="utf-8")


class Database:
    """Immutable lookup of reference features and global descriptors.

    Reference feature sets are loaded eagerly and validated; query
    artifacts are read on demand (they are not part of the database).
    Safe for unrestricted concurrent reads once constructed.
    """

    def __init__(self, manifest: DatasetManifest, feature_dir, descriptor_dir):
        self.manifest = manifest
        self._feature_dir = Path(feature_dir)
        self._descriptor_dir = Path(descriptor_dir)

        total = 0
        ref_sets: list[FeatureSet] = []
        for rid in manifest.reference_ids:
            fpath = self._feature_dir / f"{rid}.vprf"
            if not fpath.is_file():
                raise LoadError(f"missing feature file for reference {rid!r} "
                                f"({fpath})")
            ref_sets.append(load_feature_file(fpath))
            total += fpath.stat().st_size

        descriptors: dict[str, np.ndarray] = {}
        vprg_files = sorted(self._descriptor_dir.glob("*.vprg"))
        for gpath in vprg_files:
            for gd in load_descriptor_file(gpath):
                descriptors[gd.image_id] = gd.vector
            total += gpath.stat().st_size
        for rid in manifest.reference_ids:
            if rid not in descriptors:
                raise LoadError(f"missing global descriptor for reference {rid!r}")

        self._ref_sets = ref_sets
        self._ref_index = {rid: i for i, rid in enumerate(manifest.reference_ids)}
        self._descriptors = descriptors
        if manifest.reference_ids:
            self._ref_matrix = np.stack(
                [descriptors[rid] for rid in manifest.reference_ids])
        else:
            self._ref_matrix = np.zeros((0, 0), dtype=np.float32)
        self._total_bytes = total

    def __len__(self) -> int:
        return len(self._ref_sets)

    @property
    def total_bytes(self) -> int:
        """Sum of the byte sizes of every file read at construction."""
        return self._total_bytes

    @property
    def reference_descriptor_matrix(self) -> np.ndarray:
        """(n_ref, dim) float32 matrix aligned with ``reference_ids``."""
        return self._ref_matrix

    def features(self, ref: int | str) -> FeatureSet:
        """Reference features by sequence index or image id."""
        if isinstance(ref, str):
            try:
                ref = self._ref_index[ref]
            except KeyError:
                raise LoadError(f"unknown reference id {ref!r}") from None
        return self._ref_sets[ref]

    def descriptor(self, image_id: str) -> np.ndarray:
        try:
            return self._descriptors[image_id]
        except KeyError:
            raise LoadError(f"no global descriptor for {image_id!r}") from None

    def query_features(self, query_id: str) -> FeatureSet:
        """Load a query's feature file from the feature directory."""
        fpath = self._feature_dir / f"{query_id}.vprf"
        if not fpath.is_file():
            raise LoadError(f"missing feature file for query {query_id!r} "
                            f"({fpath})")
        return load_feature_file(fpath)


def load_database(manifest: DatasetManifest | str | Path,
                  feature_dir, descriptor_dir) -> Database:
    """Build a validated read-only :class:`Database` from disk artifacts."""
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    return Database(manifest, feature_dir, descriptor_dir)

"""Seeded synthetic datasets with exact ground truth.

Each place is a random reference image (random feature positions on a
quarter-pixel lattice, random unit descriptors) whose query is built
from it by moving an inlier subset by a planted shift (or homography),
adding descriptor noise, and replacing the remaining fraction with
outlier features. Global descriptors are per-place one-hot vectors plus
optional noise, so filtering quality is tunable from perfect to poor.

Everything is derived from ``rng_seed`` (per-place streams seeded by
(seed, place) so places can be generated in parallel); the same spec
always produces byte-identical files. With zero noise the planted
correspondences are recoverable exactly: inlier descriptors are
bit-identical between reference and query, and integer shifts on the
quarter-pixel lattice survive float32 storage without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .store import (
    DatasetManifest,
    FeatureSet,
    GlobalDescriptor,
    write_descriptor_file,
    write_feature_file,
    write_manifest,
)

PLACE_SPACING_M = 10.0  # planar distance between consecutive places
POOL_JITTER = 0.2  # per-feature spread around a shared vocabulary prototype
POOL_SPREAD = 40.0  # pixel scatter around a prototype's canonical position
_POOL_STREAM = 1 << 40  # stream key for the vocabulary; never a place index


@dataclass(frozen=True)
class SynthSpec:
    n_places: int = 20
    features_per_image: int = 50
    descriptor_dim: int = 32
    width: int = 336
    height: int = 336
    inlier_shift: tuple[float, float] = (0.0, 0.0)
    outlier_fraction: float = 0.0
    descriptor_noise_sigma: float = 0.0
    global_noise_sigma: float = 0.0
    # size of a shared descriptor vocabulary; None = every feature gets
    # an independent random descriptor. A small pool makes different
    # places share visual structure, so wrong candidates collect many
    # geometrically inconsistent matches (the hard case for re-ranking).
    descriptor_pool: int | None = None
    warp: tuple[tuple[float, float, float],
                tuple[float, float, float],
                tuple[float, float, float]] | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_places < 1:
            raise ConfigError(f"n_places must be >= 1, got {self.n_places}")
        if self.features_per_image < 1:
            raise ConfigError("features_per_image must be >= 1")
        if self.descriptor_dim < 2:
            raise ConfigError("descriptor_dim must be >= 2")
        if self.width < 2 or self.height < 2:
            raise ConfigError("image dimensions must be >= 2")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ConfigError(
                f"outlier_fraction must be in [0, 1), got {self.outlier_fraction}")
        if self.descriptor_noise_sigma < 0 or self.global_noise_sigma < 0:
            raise ConfigError("noise sigmas must be >= 0")
        if self.descriptor_pool is not None and self.descriptor_pool < 2:
            raise ConfigError(
                f"descriptor_pool must be >= 2, got {self.descriptor_pool}")
        dx, dy = self.inlier_shift
        if abs(dx) >= self.width or abs(dy) >= self.height:
            raise ConfigError(
                f"inlier_shift {self.inlier_shift} exceeds image size")
        if self.warp is not None:
            if self.features_per_image < 4:
                raise ConfigError("warp needs features_per_image >= 4")
            h = np.asarray(self.warp, dtype=np.float64)
            if h.shape != (3, 3) or not np.isfinite(h).all() or h[2, 2] == 0:
                raise ConfigError("warp must be a finite 3x3 matrix with "
                                  "nonzero [2][2]")


@dataclass(frozen=True)
class SynthPlace:
    index: int
    reference: FeatureSet
    query: FeatureSet
    # planted correspondences as (reference_feature, query_feature) index
    # pairs, ascending by reference index
    inlier_pairs: tuple[tuple[int, int], ...]
    reference_global: GlobalDescriptor
    query_global: GlobalDescriptor


@dataclass(frozen=True)
class SynthDataset:
    spec: SynthSpec
    places: tuple[SynthPlace, ...]
    manifest: DatasetManifest


class DatasetPaths(NamedTuple):
    manifest: Path
    feature_dir: Path
    descriptor_dir: Path


def _lattice(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    """n quarter-pixel lattice values in [lo, hi)."""
    lo4 = math.ceil(lo * 4)
    hi4 = math.ceil(hi * 4)
    if hi4 <= lo4:
        raise ConfigError(f"empty position range [{lo}, {hi})")
    return rng.integers(lo4, hi4, size=n).astype(np.float64) * 0.25


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v.astype(np.float32)


class _Vocabulary(NamedTuple):
    prototypes: np.ndarray  # (v, dim) float32 unit rows
    positions: np.ndarray  # (v, 2) float64 canonical pixel positions


def _vocabulary(spec: SynthSpec) -> _Vocabulary | None:
    """Shared descriptor prototypes, identical for every place.

    Each prototype also owns a canonical position, so images built from
    the pool share not just appearance but rough layout: matches between
    different places then cluster loosely in shift space instead of
    scattering uniformly, which is what makes them hard to re-rank.
    """
    if spec.descriptor_pool is None:
        return None
    rng = np.random.default_rng([spec.rng_seed, _POOL_STREAM])
    protos = _unit_rows(rng, spec.descriptor_pool, spec.descriptor_dim)
    pos = np.stack([rng.uniform(0, spec.width, spec.descriptor_pool),
                    rng.uniform(0, spec.height, spec.descriptor_pool)], axis=1)
    return _Vocabulary(protos, pos)


def _pool_features(spec: SynthSpec, vocab: _Vocabulary,
                   rng: np.random.Generator, n: int,
                   lo: tuple[float, float],
                   hi: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    """Positions and descriptors for n features drawn from the pool."""
    idx = rng.integers(0, len(vocab.prototypes), size=n)
    pos = vocab.positions[idx] + rng.uniform(-POOL_SPREAD, POOL_SPREAD, (n, 2))
    pos = np.floor(pos * 4.0) / 4.0  # keep the quarter-pixel lattice
    pos[:, 0] = np.clip(pos[:, 0], lo[0], hi[0] - 0.25)
    pos[:, 1] = np.clip(pos[:, 1], lo[1], hi[1] - 0.25)
    desc = vocab.prototypes[idx].astype(np.float64)
    desc += POOL_JITTER * rng.standard_normal(desc.shape)
    desc /= np.linalg.norm(desc, axis=1, keepdims=True)
    return pos, desc.astype(np.float32)


def _image_descriptors(spec: SynthSpec, vocab: _Vocabulary | None,
                       rng: np.random.Generator, n: int) -> np.ndarray:
    if vocab is None:
        return _unit_rows(rng, n, spec.descriptor_dim)
    v = vocab.prototypes[rng.integers(0, len(vocab.prototypes),
                                      size=n)].astype(np.float64)
    v += POOL_JITTER * rng.standard_normal(v.shape)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v.astype(np.float32)


def _renoise(desc: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Perturb unit descriptors and project back onto the sphere."""
    if sigma == 0.0:
        return desc.copy()  # bit-exact: zero-noise queries must match exactly
    v = desc.astype(np.float64) + sigma * rng.standard_normal(desc.shape)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v.astype(np.float32)


def _apply_warp(h: np.ndarray, pos: np.ndarray) -> np.ndarray:
    w = pos @ h[2, :2] + h[2, 2]
    return (pos @ h[:2, :2].T + h[:2, 2]) / w[:, None]


def _global_vector(place: int, n_places: int, sigma: float,
                   rng: np.random.Generator) -> np.ndarray:
    v = np.zeros(n_places, dtype=np.float64)
    v[place] = 1.0
    if sigma > 0.0:
        v += sigma * rng.standard_normal(n_places)
    v /= np.linalg.norm(v)
    return v.astype(np.float32)


def _reference_positions(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Reference feature positions; inliers stay in-bounds after motion."""
    n = spec.features_per_image
    if spec.warp is not None:
        h = np.asarray(spec.warp, dtype=np.float64)
        h = h / h[2, 2]
        kept: list[np.ndarray] = []
        got = 0
        for _ in range(1000):
            xs = _lattice(rng, n, 0.0, spec.width)
            ys = _lattice(rng, n, 0.0, spec.height)
            cand = np.stack([xs, ys], axis=1)
            moved = _apply_warp(h, cand)
            ok = ((moved[:, 0] >= 0) & (moved[:, 0] < spec.width - 0.01)
                  & (moved[:, 1] >= 0) & (moved[:, 1] < spec.height - 0.01))
            kept.append(cand[ok])
            got += int(ok.sum())
            if got >= n:
                return np.concatenate(kept)[:n]
        raise ConfigError("warp maps almost no point into bounds; "
                          "choose a milder homography")
    dx, dy = spec.inlier_shift
    xs = _lattice(rng, n, max(0.0, -dx), spec.width - max(0.0, dx))
    ys = _lattice(rng, n, max(0.0, -dy), spec.height - max(0.0, dy))
    return np.stack([xs, ys], axis=1)


def _move(spec: SynthSpec, pos: np.ndarray) -> np.ndarray:
    if spec.warp is not None:
        h = np.asarray(spec.warp, dtype=np.float64)
        moved = _apply_warp(h / h[2, 2], pos)
        # float32 rounding may nudge a boundary point onto the edge
        moved[:, 0] = np.clip(moved[:, 0], 0.0, spec.width - 0.01)
        moved[:, 1] = np.clip(moved[:, 1], 0.0, spec.height - 0.01)
        return moved
    return pos + np.asarray(spec.inlier_shift, dtype=np.float64)


def generate_place(spec: SynthSpec, place: int) -> SynthPlace:
    """Build one reference/query pair from the (seed, place) stream."""
    rng = np.random.default_rng([spec.rng_seed, place])
    n = spec.features_per_image
    ref_id = f"place{place:04d}_ref"
    qry_id = f"place{place:04d}_qry"
    vocab = _vocabulary(spec)
    anchored = vocab is not None and spec.warp is None

    if anchored:
        dx, dy = spec.inlier_shift
        ref_pos, ref_desc = _pool_features(
            spec, vocab, rng, n, (max(0.0, -dx), max(0.0, -dy)),
            (spec.width - max(0.0, dx), spec.height - max(0.0, dy)))
    else:
        ref_pos = _reference_positions(spec, rng)
        ref_desc = None  # drawn below, after the scores, like always
    ref_scores = rng.uniform(0.05, 1.0, size=n).astype(np.float32)
    if ref_desc is None:
        ref_desc = _image_descriptors(spec, vocab, rng, n)
    reference = FeatureSet.build(ref_id, spec.width, spec.height,
                                 ref_pos, ref_scores, ref_desc)

    n_out = int(round(spec.outlier_fraction * n))
    n_in = n - n_out
    inlier_ref = np.sort(rng.choice(n, size=n_in, replace=False))

    q_pos = np.empty((n, 2), dtype=np.float64)
    q_scores = np.empty(n, dtype=np.float32)
    q_desc = np.empty((n, spec.descriptor_dim), dtype=np.float32)
    q_pos[:n_in] = _move(spec, ref_pos[inlier_ref])
    q_scores[:n_in] = ref_scores[inlier_ref]
    q_desc[:n_in] = _renoise(ref_desc[inlier_ref],
                             spec.descriptor_noise_sigma, rng)
    if n_out:
        if anchored:
            q_pos[n_in:], q_desc[n_in:] = _pool_features(
                spec, vocab, rng, n_out, (0.0, 0.0),
                (float(spec.width), float(spec.height)))
            q_scores[n_in:] = rng.uniform(0.05, 1.0,
                                          size=n_out).astype(np.float32)
        else:
            q_pos[n_in:, 0] = _lattice(rng, n_out, 0.0, spec.width)
            q_pos[n_in:, 1] = _lattice(rng, n_out, 0.0, spec.height)
            q_scores[n_in:] = rng.uniform(0.05, 1.0,
                                          size=n_out).astype(np.float32)
            q_desc[n_in:] = _image_descriptors(spec, vocab, rng, n_out)

    order = rng.permutation(n)  # hide the inliers-first layout
    slot = np.argsort(order)  # slot[j] = final position of staging row j
    query = FeatureSet.build(qry_id, spec.width, spec.height,
                             q_pos[order], q_scores[order], q_desc[order])
    pairs = tuple((int(r), int(slot[i])) for i, r in enumerate(inlier_ref))

    g_ref = GlobalDescriptor(ref_id, _global_vector(
        place, spec.n_places, spec.global_noise_sigma, rng))
    g_qry = GlobalDescriptor(qry_id, _global_vector(
        place, spec.n_places, spec.global_noise_sigma, rng))
    return SynthPlace(place, reference, query, pairs, g_ref, g_qry)


def generate(spec: SynthSpec) -> SynthDataset:
    """All places plus a manifest wiring them into a dataset."""
    places = tuple(generate_place(spec, p) for p in range(spec.n_places))
    reference_ids = [pl.reference.image_id for pl in places]
    query_ids = [pl.query.image_id for pl in places]
    positions = {}
    for p, pl in enumerate(places):
        positions[pl.reference.image_id] = (PLACE_SPACING_M * p, 0.0)
        positions[pl.query.image_id] = (PLACE_SPACING_M * p, 0.0)
    manifest = DatasetManifest(
        reference_ids=reference_ids,
        query_ids=query_ids,
        ground_truth={qid: [p] for p, qid in enumerate(query_ids)},
        tolerance_unit="sequence_index",
        positions=positions,
    )
    return SynthDataset(spec, places, manifest)


def materialize(ds: SynthDataset, outdir) -> DatasetPaths:
    """Write the dataset as ordinary feature-store files.

    Layout: ``features/*.vprf``, ``descriptors/{refs,queries}.vprg``,
    ``manifest.json``. Synthetic data then flows through exactly the
    same loading path as real data.
    """
    outdir = Path(outdir)
    feature_dir = outdir / "features"
    descriptor_dir = outdir / "descriptors"
    feature_dir.mkdir(parents=True, exist_ok=True)
    descriptor_dir.mkdir(parents=True, exist_ok=True)
    for pl in ds.places:
        write_feature_file(pl.reference, feature_dir / f"{pl.reference.image_id}.vprf")
        write_feature_file(pl.query, feature_dir / f"{pl.query.image_id}.vprf")
    write_descriptor_file([pl.reference_global for pl in ds.places],
                          descriptor_dir / "refs.vprg")
    write_descriptor_file([pl.query_global for pl in ds.places],
                          descriptor_dir / "queries.vprg")
    manifest_path = outdir / "manifest.json"
    write_manifest(ds.manifest, manifest_path)
    return DatasetPaths(manifest_path, feature_dir, descriptor_dir)

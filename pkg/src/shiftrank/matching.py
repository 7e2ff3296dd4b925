"""Mutual nearest-neighbor feature matching and per-match weighting.

Matching is exact brute-force over Euclidean descriptor distances with
cross-check: a pair (i, j) survives only if j is the nearest candidate
feature to query feature i AND i is the nearest query feature to j.
Ties are broken toward the lowest index on both sides, which makes the
result deterministic across platforms.

Shift sign convention, used by every scorer downstream:
``shift = query position - candidate position``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ContractError
from .store import FeatureSet


class WeightScheme(enum.Enum):
    """How a match weight is derived.

    FS: sum of the two features' detector scores.
    DMF: 2 minus the Euclidean descriptor distance (unit-norm
    descriptors keep distances in [0, 2]).
    """

    FS = "fs"
    DMF = "dmf"

    @classmethod
    def parse(cls, name: str) -> "WeightScheme":
        try:
            return cls(name.lower())
        except ValueError:
            raise ContractError(
                f"unknown weight scheme {name!r}; expected 'fs' or 'dmf'"
            ) from None


class Match(NamedTuple):
    idx_a: int
    idx_b: int
    distance: float
    weight: float
    shift_x: float
    shift_y: float


@dataclass(frozen=True)
class MatchSet:
    """Cross-checked correspondences between a query and one candidate.

    Column arrays are row-aligned; ``pos_a``/``pos_b`` keep the raw
    feature positions so model-based scorers need no second lookup.
    No feature index appears twice on either side (cross-check
    bijectivity).
    """

    query_id: str
    candidate_id: str
    idx_a: np.ndarray  # (n,) int32 indices into the query set
    idx_b: np.ndarray  # (n,) int32 indices into the candidate set
    distance: np.ndarray  # (n,) float64 Euclidean descriptor distance
    weight: np.ndarray  # (n,) float64, nonnegative
    pos_a: np.ndarray  # (n, 2) float64 query positions
    pos_b: np.ndarray  # (n, 2) float64 candidate positions

    def __len__(self) -> int:
        return int(self.idx_a.shape[0])

    @property
    def shift_x(self) -> np.ndarray:
        return self.pos_a[:, 0] - self.pos_b[:, 0]

    @property
    def shift_y(self) -> np.ndarray:
        return self.pos_a[:, 1] - self.pos_b[:, 1]

    @property
    def matches(self) -> list[Match]:
        sx, sy = self.shift_x, self.shift_y
        return [Match(int(self.idx_a[k]), int(self.idx_b[k]),
                      float(self.distance[k]), float(self.weight[k]),
                      float(sx[k]), float(sy[k]))
                for k in range(len(self))]

    def __iter__(self) -> Iterator[Match]:
        return iter(self.matches)

    @staticmethod
    def empty(query_id: str = "", candidate_id: str = "") -> "MatchSet":
        return MatchSet(query_id, candidate_id,
                        np.empty(0, np.int32), np.empty(0, np.int32),
                        np.empty(0, np.float64), np.empty(0, np.float64),
                        np.empty((0, 2), np.float64), np.empty((0, 2), np.float64))


def match_features(a: FeatureSet, b: FeatureSet) -> MatchSet:
    """Mutual-NN correspondences between two feature sets.

    Candidate selection runs on a float32 Gram matrix (the dominant
    cost at database scale); the reported distances are then recomputed
    exactly in float64 for the selected pairs only. Weights are
    initialized to 1; apply :func:`weigh_matches` to assign a scheme.
    """
    if a.descriptor_dim != b.descriptor_dim:
        raise ContractError(
            f"descriptor dims differ: {a.descriptor_dim} vs {b.descriptor_dim}")
    if len(a) == 0 or len(b) == 0:
        return MatchSet.empty(a.image_id, b.image_id)

    # ||x - y||^2 = ||x||^2 + ||y||^2 - 2 x.y; cheap and close enough to
    # pick argmins, since genuine ties are broken by index anyway.
    gram = a.descriptors @ b.descriptors.T
    sq_a = np.einsum("ij,ij->i", a.descriptors, a.descriptors)
    sq_b = np.einsum("ij,ij->i", b.descriptors, b.descriptors)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * gram

    nearest_in_b = np.argmin(d2, axis=1)  # first minimum = lowest index
    nearest_in_a = np.argmin(d2, axis=0)
    ia = np.flatnonzero(nearest_in_a[nearest_in_b] == np.arange(len(a)))
    ib = nearest_in_b[ia]

    diffs = (a.descriptors[ia].astype(np.float64)
             - b.descriptors[ib].astype(np.float64))
    dist = np.linalg.norm(diffs, axis=1)

    return MatchSet(
        a.image_id, b.image_id,
        ia.astype(np.int32), ib.astype(np.int32),
        dist, np.ones(len(ia), np.float64),
        a.positions[ia].astype(np.float64),
        b.positions[ib].astype(np.float64),
    )


def weigh_matches(ms: MatchSet, scheme: WeightScheme,
                  a: FeatureSet, b: FeatureSet) -> MatchSet:
    """Return a copy of ``ms`` with weights assigned under ``scheme``.

    FS: weight = score_a + score_b. DMF: weight = 2 - distance, clamped
    at zero (distances can exceed 2 only through permitted descriptor
    norm drift). All other fields are unchanged.
    """
    if scheme is WeightScheme.FS:
        weight = (a.scores[ms.idx_a].astype(np.float64)
                  + b.scores[ms.idx_b].astype(np.float64))
    elif scheme is WeightScheme.DMF:
        weight = np.maximum(2.0 - ms.distance, 0.0)
    else:  # pragma: no cover - enum is closed
        raise ContractError(f"unsupported weight scheme {scheme!r}")
    return replace(ms, weight=weight)


def tie_break_nn(distances) -> int:
    """Index of the smallest distance, lowest index winning ties."""
    distances = np.asarray(distances)
    if distances.size == 0:
        raise ContractError("tie_break_nn requires a nonempty distance list")
    return int(np.argmin(distances))


def write_match_csv(ms: MatchSet, path) -> None:
    """Dump one CSV record per match for external visualization."""
    sx, sy = ms.shift_x, ms.shift_y
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["idx_a", "idx_b", "distance", "weight",
                         "shift_x", "shift_y"])
        for k in range(len(ms)):
            writer.writerow([int(ms.idx_a[k]), int(ms.idx_b[k]),
                             repr(float(ms.distance[k])),
                             repr(float(ms.weight[k])),
                             repr(float(sx[k])), repr(float(sy[k]))])

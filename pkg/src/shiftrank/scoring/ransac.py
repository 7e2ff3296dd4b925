"""RANSAC homography scorer (projective-model reference baseline).

Repeatedly fits a homography to random 4-match samples, counts matches
whose reprojection error stays under a pixel threshold, and reports the
best consensus size as the pair similarity. Slower than the model-free
scorers but the standard yardstick for spatial verification.

Minimal solver: direct linear transform on Hartley-normalized points
(translate the centroid to the origin, scale the mean distance to
sqrt(2)), smallest-singular-vector solution. No final least-squares
refit -- the score is the raw consensus size of the best sampled model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..matching import MatchSet

_W_TINY = 1e-12  # homogeneous scale below which a projection is unusable


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 2000
    inlier_threshold: float = 24.0  # px; use 8.0 for a strict variant
    confidence: float = 0.99
    symmetric_error: bool = False  # also check the backward projection

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError(
                f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.inlier_threshold > 0:
            raise ConfigError(
                f"inlier_threshold must be > 0, got {self.inlier_threshold}")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError(
                f"confidence must be in (0, 1), got {self.confidence}")


@dataclass(frozen=True)
class RansacResult:
    score: float  # best consensus size (inlier count)
    model: np.ndarray | None  # (3, 3) homography, or None if nothing fit
    iterations: int  # samples actually drawn
    inlier_mask: np.ndarray  # (n,) bool against the best model


def _normalization(points: np.ndarray) -> np.ndarray | None:
    """Similarity transform taking points to centroid 0, mean norm sqrt(2)."""
    centroid = points.mean(axis=0)
    dist = np.linalg.norm(points - centroid, axis=1).mean()
    if dist < 1e-12:
        return None  # coincident points
    s = math.sqrt(2.0) / dist
    return np.array([[s, 0.0, -s * centroid[0]],
                     [0.0, s, -s * centroid[1]],
                     [0.0, 0.0, 1.0]])


def _collinear(points: np.ndarray) -> bool:
    """True if any 3 of the points span (nearly) zero area."""
    extent = float(np.ptp(points, axis=0).max())
    tol = 1e-9 * max(extent * extent, 1.0)
    n = points.shape[0]
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            dij = points[j] - points[i]
            for k in range(j + 1, n):
                dik = points[k] - points[i]
                if abs(dij[0] * dik[1] - dij[1] * dik[0]) <= tol:
                    return True
    return False


def fit_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    """Homography H with dst ~ H @ src from >= 4 correspondences.

    Returns None for degenerate inputs (coincident or collinear points,
    rank-deficient system). The result is scaled so H[2, 2] == 1.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = src.shape[0]
    if n < 4:
        raise ConfigError(f"need at least 4 correspondences, got {n}")
    if _collinear(src) or _collinear(dst):
        return None
    t_src = _normalization(src)
    t_dst = _normalization(dst)
    if t_src is None or t_dst is None:
        return None
    ns = (src @ t_src[:2, :2].T) + t_src[:2, 2]
    nd = (dst @ t_dst[:2, :2].T) + t_dst[:2, 2]

    a = np.zeros((2 * n, 9))
    a[0::2, 0:2] = ns
    a[0::2, 2] = 1.0
    a[0::2, 6:8] = -nd[:, 0:1] * ns
    a[0::2, 8] = -nd[:, 0]
    a[1::2, 3:5] = ns
    a[1::2, 5] = 1.0
    a[1::2, 6:8] = -nd[:, 1:2] * ns
    a[1::2, 8] = -nd[:, 1]

    try:
        _, sv, vt = np.linalg.svd(a)
    except np.linalg.LinAlgError:
        return None
    if sv[-2] < 1e-12:  # nullspace dimension > 1: ambiguous solution
        return None
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ hn @ t_src
    if not np.all(np.isfinite(h)) or abs(h[2, 2]) < _W_TINY:
        return None
    return h / h[2, 2]


def reprojection_errors(h: np.ndarray, src: np.ndarray, dst: np.ndarray,
                        symmetric: bool = False) -> np.ndarray:
    """Per-correspondence forward error ||proj(H, src) - dst||.

    With ``symmetric`` the backward error through H^-1 is also computed
    and the larger of the two is returned. Points that project to
    infinity get an infinite error.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    errors = _one_way_errors(h, src, dst)
    if symmetric:
        try:
            h_inv = np.linalg.inv(h)
        except np.linalg.LinAlgError:
            return np.full(src.shape[0], np.inf)
        errors = np.maximum(errors, _one_way_errors(h_inv, dst, src))
    return errors


def _one_way_errors(h: np.ndarray, src: np.ndarray,
                    dst: np.ndarray) -> np.ndarray:
    proj = src @ h[:2, :2].T + h[:2, 2]
    w = src @ h[2, :2] + h[2, 2]
    errors = np.full(src.shape[0], np.inf)
    ok = np.abs(w) > _W_TINY
    diff = proj[ok] / w[ok, None] - dst[ok]
    errors[ok] = np.linalg.norm(diff, axis=1)
    return errors


def count_inliers(h: np.ndarray, ms: MatchSet,
                  cfg: RansacConfig) -> tuple[int, np.ndarray]:
    errors = reprojection_errors(h, ms.pos_a, ms.pos_b,
                                 symmetric=cfg.symmetric_error)
    mask = errors < cfg.inlier_threshold
    return int(mask.sum()), mask


def _required_iterations(inlier_ratio: float, confidence: float) -> float:
    """Samples needed so P(at least one all-inlier 4-sample) >= confidence."""
    good = inlier_ratio ** 4
    if good >= 1.0:
        return 1.0
    if good <= 0.0:
        return math.inf
    return math.log(1.0 - confidence) / math.log(1.0 - good)


def ransac_score(ms: MatchSet, rng: np.random.Generator,
                 cfg: RansacConfig | None = None) -> RansacResult:
    """Best consensus size over sampled homographies.

    Fewer than 4 matches cannot constrain a homography and score 0.
    Iteration stops early once enough samples have been drawn for the
    configured confidence given the best inlier ratio seen so far.
    Deterministic for a given generator state.
    """
    cfg = cfg or RansacConfig()
    n = len(ms)
    if n < 4:
        return RansacResult(0.0, None, 0, np.zeros(n, dtype=bool))
    src = ms.pos_a
    dst = ms.pos_b

    best_count = 0
    best_model: np.ndarray | None = None
    best_mask = np.zeros(n, dtype=bool)
    needed = float(cfg.max_iterations)
    it = 0
    while it < cfg.max_iterations and it < needed:
        sample = rng.choice(n, size=4, replace=False)
        it += 1
        h = fit_homography(src[sample], dst[sample])
        if h is None:
            continue
        count, mask = count_inliers(h, ms, cfg)
        if count > best_count:
            best_count = count
            best_model = h
            best_mask = mask
            needed = _required_iterations(count / n, cfg.confidence)
    return RansacResult(float(best_count), best_model, it, best_mask)

"""Shared fixture builders.

Everything here is deterministic given an explicit Generator; tests
pass seeds, never global random state. Match sets are constructed
directly (bypassing file IO and the matcher) so scorer tests control
the geometry exactly.
"""

import numpy as np
import pytest

from shiftrank import FeatureSet, MatchSet

IMG_W = 336
IMG_H = 336


def unit_rows(rng, n, dim):
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v.astype(np.float32)


def random_feature_set(rng, image_id="img", n=40, dim=16,
                       width=IMG_W, height=IMG_H):
    pos = np.stack([rng.uniform(0, width, n), rng.uniform(0, height, n)],
                   axis=1)
    scores = rng.uniform(0.05, 1.0, n).astype(np.float32)
    return FeatureSet.build(image_id, width, height, pos, scores,
                            unit_rows(rng, n, dim))


def separated_feature_sets(rng, na=40, nb=40, dim=16, min_gap=1e-4,
                           width=IMG_W, height=IMG_H):
    """Two feature sets whose nearest-neighbor structure is unambiguous.

    Rejects draws where any row's best and second-best descriptor
    distances are within ``min_gap`` (in either direction), so float32
    vs float64 arithmetic cannot disagree about the nearest neighbor.
    """
    for _ in range(100):
        a = random_feature_set(rng, "qry", na, dim, width, height)
        b = random_feature_set(rng, "cand", nb, dim, width, height)
        d = np.linalg.norm(a.descriptors.astype(np.float64)[:, None, :]
                           - b.descriptors.astype(np.float64)[None, :, :],
                           axis=2)
        ok = True
        for axis in (0, 1):
            ranked = np.sort(d, axis=axis)
            top2 = np.take(ranked, [0, 1], axis=axis)
            gap = np.abs(np.diff(top2, axis=axis))
            if gap.min() < min_gap:
                ok = False
                break
        if ok:
            return a, b
    raise AssertionError("could not draw a margin-separated fixture")


def build_match_set(pos_a, pos_b, weight=None, distance=None,
                    query_id="q", candidate_id="c"):
    """MatchSet with explicit geometry; indices are just 0..n-1."""
    pos_a = np.asarray(pos_a, dtype=np.float64)
    pos_b = np.asarray(pos_b, dtype=np.float64)
    n = pos_a.shape[0]
    if weight is None:
        weight = np.ones(n)
    if distance is None:
        distance = np.zeros(n)
    return MatchSet(query_id, candidate_id,
                    np.arange(n, dtype=np.int32), np.arange(n, dtype=np.int32),
                    np.asarray(distance, dtype=np.float64),
                    np.asarray(weight, dtype=np.float64),
                    pos_a, pos_b)


def shifted_match_set(rng, n=50, shift=(20.0, -10.0), jitter=0.0,
                      weight_range=(0.5, 2.0), width=IMG_W, height=IMG_H):
    """All matches share one shift (plus optional Gaussian jitter)."""
    dx, dy = shift
    pos_b = np.stack([
        rng.uniform(max(0, -dx) + 3 * jitter, width - max(0, dx) - 3 * jitter, n),
        rng.uniform(max(0, -dy) + 3 * jitter, height - max(0, dy) - 3 * jitter, n),
    ], axis=1)
    pos_a = pos_b + np.asarray(shift)
    if jitter > 0:
        pos_a = pos_a + rng.normal(0.0, jitter, (n, 2))
    weight = rng.uniform(*weight_range, n)
    return build_match_set(pos_a, pos_b, weight)


def clustered_match_set(rng, n=60, inlier_ratio=0.92, sigma_hist=22.5,
                        jitter=5.0, width=IMG_W, height=IMG_H):
    """Inlier-dominated shifts: one tight cluster plus far outliers.

    The outlier shifts are placed at least 4.5 * sigma_hist away from
    the cluster center, and outlier weight is capped at 5% of the
    total, which keeps the histogram truncation error provably far
    below the 1.2e-4 relative tolerance used by the oracle tests.
    Returns (match_set, cluster_shift).
    """
    n_in = max(1, int(round(n * inlier_ratio)))
    n_out = n - n_in
    base = rng.uniform(-80.0, 80.0, 2)
    shifts = np.empty((n, 2))
    shifts[:n_in] = base + rng.normal(0.0, jitter, (n_in, 2))
    if n_out:
        angle = rng.uniform(0.0, 2 * np.pi, n_out)
        radius = rng.uniform(4.5 * sigma_hist + 1.0, 240.0, n_out)
        shifts[n_in:, 0] = base[0] + radius * np.cos(angle)
        shifts[n_in:, 1] = base[1] + radius * np.sin(angle)
    np.clip(shifts[:, 0], -(width - 1.0), width - 1.0, out=shifts[:, 0])
    np.clip(shifts[:, 1], -(height - 1.0), height - 1.0, out=shifts[:, 1])

    weight = np.empty(n)
    weight[:n_in] = rng.uniform(0.5, 2.0, n_in)
    if n_out:
        cap = 0.05 * weight[:n_in].sum() / n_out
        weight[n_in:] = rng.uniform(0.2 * cap, cap, n_out)

    pos_b = np.stack([rng.uniform(0, width, n), rng.uniform(0, height, n)],
                     axis=1)
    pos_a = pos_b + shifts  # may leave the frame; scorers only see shifts
    return build_match_set(pos_a, pos_b, weight), base


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

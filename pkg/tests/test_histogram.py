"""Shift-histogram scorer vs a dense per-match voting oracle."""

import math

import numpy as np
import pytest

import shiftrank as sr
from shiftrank.scoring.histogram import _grid_geometry

from conftest import IMG_H, IMG_W, build_match_set, clustered_match_set

DIMS = (float(IMG_W), float(IMG_H))


def histogram_oracle(ms, dims, bin_size, sigma):
    """Untruncated voting, one full-grid Gaussian per match.

    Deliberately non-separable (single 2D exponential per bin) so its
    arithmetic differs from the implementation's factored kernel.
    """
    width, height = dims
    n_x = math.ceil(2.0 * width / bin_size)
    n_y = math.ceil(2.0 * height / bin_size)
    ox = -width + 0.5 * bin_size
    oy = -height + 0.5 * bin_size
    cx, cy = np.meshgrid(ox + bin_size * np.arange(n_x),
                         oy + bin_size * np.arange(n_y))
    bins = np.zeros((n_y, n_x))
    sx, sy = ms.shift_x, ms.shift_y
    for k in range(len(ms)):
        d2 = (cx - sx[k]) ** 2 + (cy - sy[k]) ** 2
        bins += ms.weight[k] * np.exp(-d2 / (2.0 * sigma * sigma))
    return bins


class TestGridGeometry:
    def test_grid_covers_full_shift_range(self):
        n_x, n_y, (ox, oy) = _grid_geometry(DIMS, 15.0)
        assert n_x * 15.0 >= 2 * IMG_W
        assert n_y * 15.0 >= 2 * IMG_H
        assert ox == -IMG_W + 7.5
        # last bin center reaches at least the positive edge minus one bin
        assert ox + (n_x - 1) * 15.0 >= IMG_W - 15.0

    def test_odd_sizes_round_up(self):
        n_x, n_y, _ = _grid_geometry((100.0, 50.0), 13.0)
        assert n_x == math.ceil(200 / 13)
        assert n_y == math.ceil(100 / 13)


class TestVoteAccumulation:
    def test_untruncated_matches_oracle(self):
        cfg = sr.HistogramConfig(truncation_radius=None)
        for seed in range(25):
            ms, _ = clustered_match_set(np.random.default_rng(seed))
            got = sr.build_histogram(ms, DIMS, cfg)
            want = histogram_oracle(ms, DIMS, cfg.bin_size, cfg.sigma)
            np.testing.assert_allclose(got.bins, want, rtol=1e-12, atol=1e-300)

    def test_truncated_score_within_bound_of_oracle_200_seeds(self):
        cfg = sr.HistogramConfig()  # 3 sigma truncation
        assert cfg.truncation_radius == 3.0
        for seed in range(200):
            ms, _ = clustered_match_set(np.random.default_rng(seed))
            got = sr.histogram_score(ms, DIMS, cfg).score
            want = histogram_oracle(ms, DIMS, cfg.bin_size, cfg.sigma).max()
            assert got == pytest.approx(want, rel=1.2e-4), f"seed {seed}"
            assert got <= want * (1 + 1e-12)  # truncation only removes votes

    def test_single_match_at_bin_center_votes_exactly_w(self):
        # shift (1.5, 1.5) sits exactly on a bin center for 15 px bins
        ms = build_match_set([[101.5, 101.5]], [[100.0, 100.0]],
                             weight=[0.7375])
        for trunc in (3.0, None):
            hist = sr.build_histogram(ms, DIMS, sr.HistogramConfig(
                truncation_radius=trunc))
            assert hist.bins.max() == 0.7375
            res = sr.histogram_score(ms, DIMS,
                                     sr.HistogramConfig(truncation_radius=trunc))
            assert res.score == 0.7375
            assert res.dominant_shift == (1.5, 1.5)

    def test_score_never_exceeds_total_weight(self):
        for seed in range(50):
            ms, _ = clustered_match_set(np.random.default_rng(seed + 300))
            res = sr.histogram_score(ms, DIMS, sr.HistogramConfig())
            assert res.score <= ms.weight.sum() * (1 + 1e-12)

    def test_truncation_drops_distant_votes(self):
        # two matches 400 px apart: each bin sees only its own vote
        ms = build_match_set([[1.5, 1.5], [301.5, 101.5]],
                             [[0.0, 0.0], [100.0, 0.0]],
                             weight=[1.0, 1.0])
        hist = sr.build_histogram(ms, DIMS, sr.HistogramConfig())
        exact = sr.build_histogram(ms, DIMS,
                                   sr.HistogramConfig(truncation_radius=None))
        assert hist.bins.max() == 1.0
        assert exact.bins.max() > 1.0 - 1e-9  # oracle keeps the tiny tail too
        assert (hist.bins > 0).sum() < (exact.bins > 0).sum()


class TestScoreSelection:
    def test_empty_match_set_is_degenerate(self):
        res = sr.histogram_score(sr.MatchSet.empty(), DIMS,
                                 sr.HistogramConfig())
        assert res.degenerate
        assert res.score == 0.0
        assert res.dominant_shift == (0.0, 0.0)

    def test_tie_goes_to_first_bin_row_major(self):
        # equal votes in two far-apart bins sharing a column (separation
        # far beyond the truncation radius, so no cross-talk): the
        # lower-row bin must win the argmax
        ms = build_match_set([[101.5, 101.5], [101.5, 311.5]],
                             [[100.0, 100.0], [100.0, 10.0]],
                             weight=[1.0, 1.0])
        res = sr.histogram_score(ms, DIMS, sr.HistogramConfig())
        assert res.dominant_shift == (1.5, 1.5)

    def test_dominant_shift_tracks_planted_cluster(self):
        for seed in range(30):
            rng = np.random.default_rng(seed + 900)
            ms, base = clustered_match_set(rng, jitter=2.0)
            res = sr.histogram_score(ms, DIMS, sr.HistogramConfig())
            # the winning bin center lies within one bin of the cluster
            assert abs(res.dominant_shift[0] - base[0]) <= 15.0
            assert abs(res.dominant_shift[1] - base[1]) <= 15.0


class TestHistogramConfig:
    def test_defaults(self):
        cfg = sr.HistogramConfig()
        assert cfg.bin_size == 15.0
        assert cfg.sigma == 22.5
        assert cfg.weight_scheme is sr.WeightScheme.FS

    @pytest.mark.parametrize("kwargs", [
        {"bin_size": 0.0},
        {"sigma": -1.0},
        {"truncation_radius": 0.5},
    ])
    def test_invalid_config_rejected(self, kwargs):
        with pytest.raises(sr.ConfigError):
            sr.HistogramConfig(**kwargs)


def test_histogram_dump_roundtrips_values(tmp_path, rng):
    ms, _ = clustered_match_set(rng, n=20)
    hist = sr.build_histogram(ms, DIMS, sr.HistogramConfig())
    out = tmp_path / "hist.txt"
    from shiftrank.scoring.histogram import write_histogram_dump
    write_histogram_dump(hist, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("# origin")
    grid = np.array([[float(v) for v in line.split()] for line in lines[1:]])
    np.testing.assert_array_equal(grid, hist.bins)

"""Anchor-grid scorer vs pure-Python tally and window-scan oracles."""

import math

import numpy as np
import pytest

import shiftrank as sr
from shiftrank.scoring.anchor import anchor_cell_score, score_bin_matrix

from conftest import IMG_H, IMG_W, build_match_set

GRID = 15


def dummy_image(width=IMG_W, height=IMG_H, image_id="img"):
    desc = np.zeros((1, 4), np.float32)
    desc[0, 0] = 1.0
    return sr.FeatureSet.build(image_id, width, height,
                               np.array([[1.0, 1.0]]), np.array([0.5]), desc)


def cell_of(pos, width, height, g):
    col = min(g - 1, max(0, int(math.floor(pos[0] * g / width))))
    row = min(g - 1, max(0, int(math.floor(pos[1] * g / height))))
    return row, col


def bin_matrix_oracle(ms, width, height, g):
    """Dict-based vote tally; winner = max vote, ties lowest (row, col)."""
    votes = {}
    for k in range(len(ms)):
        ca = cell_of(ms.pos_a[k], width, height, g)
        cb = cell_of(ms.pos_b[k], width, height, g)
        votes.setdefault(ca, {}).setdefault(cb, 0.0)
        votes[ca][cb] += float(ms.weight[k])
    best = {}
    for ca, targets in votes.items():
        top = max(targets.values())
        if top > 0.0:
            winner = min(cb for cb, v in targets.items() if v == top)
            best[ca] = (winner, top)
    return best


def anchor_score_oracle(best, window, tol):
    """Triple-loop consistency scan over present cells."""
    total = 0.0
    for (r, c), ((mr, mc), w) in best.items():
        acc = 0.0
        for (k, l), ((nr, nc), _) in best.items():
            if (k, l) == (r, c):
                continue
            if abs(r - k) > window or abs(c - l) > window:
                continue
            residual = math.hypot((r - k) - (mr - nr), (c - l) - (mc - nc))
            acc += max(tol - residual, 0.0)
        total += w * acc
    return total


def random_match_set(rng, n=60):
    pos_a = np.stack([rng.uniform(0, IMG_W, n), rng.uniform(0, IMG_H, n)],
                     axis=1)
    pos_b = np.stack([rng.uniform(0, IMG_W, n), rng.uniform(0, IMG_H, n)],
                     axis=1)
    return build_match_set(pos_a, pos_b, weight=rng.uniform(0.2, 2.0, n))


def cell_center(row, col, width=IMG_W, height=IMG_H, g=GRID):
    return ((col + 0.5) * width / g, (row + 0.5) * height / g)


def translation_fixture(cells, delta=(1, 2)):
    """One match per query cell, every target displaced by ``delta``."""
    dr, dc = delta
    pos_a = [cell_center(r, c) for r, c in cells]
    pos_b = [cell_center(r + dr, c + dc) for r, c in cells]
    return build_match_set(pos_a, pos_b)


class TestBinMatrix:
    def test_matches_tally_oracle_200_seeds(self):
        cfg = sr.AnchorConfig()
        a, b = dummy_image(), dummy_image()
        for seed in range(200):
            ms = random_match_set(np.random.default_rng(seed))
            mat = sr.build_bin_matrix(ms, a, b, cfg)
            best = bin_matrix_oracle(ms, IMG_W, IMG_H, cfg.grid_bins)
            got_cells = {tuple(rc) for rc in np.argwhere(mat.present)}
            assert got_cells == set(best), f"seed {seed}"
            for (r, c), ((mr, mc), w) in best.items():
                target, weight = mat.entry(r, c)
                assert target == (mr, mc)
                assert weight == w  # same accumulation order, same bits

    def test_equal_votes_pick_lowest_candidate_cell(self):
        # one query cell voting for cells (4, 9) and (2, 3) equally
        pos_a = [cell_center(7, 7), cell_center(7, 7)]
        pos_b = [cell_center(4, 9), cell_center(2, 3)]
        ms = build_match_set(pos_a, pos_b, weight=[1.25, 1.25])
        mat = sr.build_bin_matrix(ms, dummy_image(), dummy_image(),
                                  sr.AnchorConfig())
        target, weight = mat.entry(7, 7)
        assert target == (2, 3)
        assert weight == 1.25

    def test_zero_weight_votes_leave_cell_empty(self):
        ms = build_match_set([cell_center(3, 3)], [cell_center(5, 5)],
                             weight=[0.0])
        mat = sr.build_bin_matrix(ms, dummy_image(), dummy_image(),
                                  sr.AnchorConfig())
        assert not mat.present.any()

    def test_boundary_positions_clamp_into_grid(self):
        w, h = float(IMG_W), float(IMG_H)
        ms = build_match_set([[w - 1e-3, h - 1e-3], [0.0, 0.0]],
                             [[0.0, 0.0], [w - 1e-3, h - 1e-3]])
        mat = sr.build_bin_matrix(ms, dummy_image(), dummy_image(),
                                  sr.AnchorConfig())
        assert mat.present[GRID - 1, GRID - 1]
        assert mat.present[0, 0]

    def test_absent_entry_raises(self):
        mat = sr.build_bin_matrix(sr.MatchSet.empty(), dummy_image(),
                                  dummy_image(), sr.AnchorConfig())
        with pytest.raises(sr.ContractError):
            mat.entry(0, 0)


class TestAnchorScore:
    def test_matches_window_scan_oracle_200_seeds(self):
        cfg = sr.AnchorConfig()
        a, b = dummy_image(), dummy_image()
        for seed in range(200):
            ms = random_match_set(np.random.default_rng(seed))
            got = sr.anchor_score(ms, a, b, cfg)
            best = bin_matrix_oracle(ms, IMG_W, IMG_H, cfg.grid_bins)
            want = anchor_score_oracle(best, cfg.window, cfg.tolerance)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12), f"seed {seed}"

    def test_uniform_translation_gives_t_per_neighbor(self):
        cells = [(r, c) for r in range(0, 12, 2) for c in range(0, 12, 3)]
        ms = translation_fixture(cells, delta=(1, 2))
        cfg = sr.AnchorConfig()
        mat = sr.build_bin_matrix(ms, dummy_image(), dummy_image(), cfg)
        # every anchor sees residual exactly 0 for every present neighbor
        counts = {}
        for r, c in cells:
            neighbors = sum(1 for k, l in cells if (k, l) != (r, c)
                            and abs(r - k) <= cfg.window
                            and abs(c - l) <= cfg.window)
            counts[(r, c)] = neighbors
            per_anchor = anchor_cell_score(mat, r, c, cfg)
            weight = mat.entry(r, c)[1]
            assert per_anchor == weight * (cfg.tolerance * neighbors)
        total = sr.anchor_score(ms, dummy_image(), dummy_image(), cfg)
        closed_form = sum(mat.entry(r, c)[1] * cfg.tolerance * counts[(r, c)]
                          for r, c in cells)
        assert total == pytest.approx(closed_form, rel=1e-12)

    def test_single_present_cell_scores_zero(self):
        ms = build_match_set([cell_center(5, 5)], [cell_center(6, 6)])
        assert sr.anchor_score(ms, dummy_image(), dummy_image(),
                               sr.AnchorConfig()) == 0.0

    def test_empty_match_set_scores_zero(self):
        assert sr.anchor_score(sr.MatchSet.empty(), dummy_image(),
                               dummy_image(), sr.AnchorConfig()) == 0.0

    def test_neighbors_outside_window_do_not_contribute(self):
        cfg = sr.AnchorConfig(window=3)
        near = translation_fixture([(0, 0), (0, 3)])  # inside the window
        far = translation_fixture([(0, 0), (0, 4)])  # one past the window
        assert sr.anchor_score(near, dummy_image(), dummy_image(), cfg) > 0
        assert sr.anchor_score(far, dummy_image(), dummy_image(), cfg) == 0.0

    def test_inconsistent_displacement_beyond_tolerance_scores_zero(self):
        # neighbor displaced by (0, 3) in cells vs (0, 0) in match space:
        # residual 3 == tolerance, max(t - 3, 0) = 0
        pos_a = [cell_center(5, 5), cell_center(5, 8)]
        pos_b = [cell_center(5, 5), cell_center(5, 5)]
        ms = build_match_set(pos_a, pos_b)
        assert sr.anchor_score(ms, dummy_image(), dummy_image(),
                               sr.AnchorConfig()) == 0.0

    def test_include_anchor_self_adds_t_times_weight(self):
        cells = [(2, 2), (2, 4), (6, 6)]
        ms = translation_fixture(cells)
        base_cfg = sr.AnchorConfig()
        self_cfg = sr.AnchorConfig(include_anchor_self=True)
        a, b = dummy_image(), dummy_image()
        mat = sr.build_bin_matrix(ms, a, b, base_cfg)
        weights = sum(mat.entry(r, c)[1] for r, c in cells)
        gap = (sr.anchor_score(ms, a, b, self_cfg)
               - sr.anchor_score(ms, a, b, base_cfg))
        assert gap == pytest.approx(base_cfg.tolerance * weights, rel=1e-12)

    def test_per_cell_and_vectorized_paths_agree(self, rng):
        cfg = sr.AnchorConfig()
        ms = random_match_set(rng)
        mat = sr.build_bin_matrix(ms, dummy_image(), dummy_image(), cfg)
        total = sum(anchor_cell_score(mat, int(r), int(c), cfg)
                    for r, c in np.argwhere(mat.present))
        assert score_bin_matrix(mat, cfg) == pytest.approx(total, rel=1e-12)


class TestAnchorConfig:
    def test_defaults(self):
        cfg = sr.AnchorConfig()
        assert cfg.grid_bins == 15
        assert cfg.window == 10
        assert cfg.tolerance == 3.0
        assert cfg.weight_scheme is sr.WeightScheme.FS
        assert cfg.include_anchor_self is False

    @pytest.mark.parametrize("kwargs", [
        {"grid_bins": 1},
        {"window": 0},
        {"tolerance": 0.0},
    ])
    def test_invalid_config_rejected(self, kwargs):
        with pytest.raises(sr.ConfigError):
            sr.AnchorConfig(**kwargs)


def test_bin_matrix_dump_lists_present_cells(tmp_path, rng):
    from shiftrank.scoring.anchor import write_bin_matrix_dump
    ms = random_match_set(rng, n=25)
    mat = sr.build_bin_matrix(ms, dummy_image(), dummy_image(),
                              sr.AnchorConfig())
    out = tmp_path / "cells.txt"
    write_bin_matrix_dump(mat, out)
    lines = out.read_text().strip().splitlines()
    assert len(lines) == int(mat.present.sum())

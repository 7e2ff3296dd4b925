"""Anchor-points scorer over a grid-cell match matrix.

Irregular local features are first converted into the fixed-grid
representation this method needs: the query image is divided into
``grid_bins`` x ``grid_bins`` square cells, every match votes (with its
weight) from its query cell toward the candidate cell containing the
matched feature, and the winning candidate cell per query cell becomes
that cell's entry. Cells without any vote stay empty and are skipped.

Each present entry then acts as an anchor: neighbors inside a square
window are checked for consistent relative displacement, each
contributing ``max(t - ||cell offset - match offset||, 0)``, and the
per-anchor sum is scaled by the anchor's vote weight. The pair
similarity is the total over all anchors.

Cell coordinates are (row, col) integer pairs; the residual norm is
Euclidean on those vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ContractError
from ..matching import MatchSet, WeightScheme
from ..store import FeatureSet


@dataclass(frozen=True)
class AnchorConfig:
    grid_bins: int = 15
    window: int = 10  # half-width of the neighbor window, in cells
    tolerance: float = 3.0  # consistency threshold t, in cells
    weight_scheme: WeightScheme = WeightScheme.FS
    include_anchor_self: bool = False  # count the anchor as its own neighbor

    def __post_init__(self):
        if self.grid_bins < 2:
            raise ConfigError(f"grid_bins must be >= 2, got {self.grid_bins}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance}")


@dataclass(frozen=True)
class BinMatchMatrix:
    """Per-cell winning correspondence between two cell grids.

    ``target[r, c]`` is the (row, col) of the matched candidate cell and
    ``weight[r, c]`` the winning vote sum; both are meaningful only
    where ``present[r, c]``.
    """

    grid_bins: int
    present: np.ndarray  # (g, g) bool
    target: np.ndarray  # (g, g, 2) int16, -1 where empty
    weight: np.ndarray  # (g, g) float64

    def entry(self, row: int, col: int) -> tuple[tuple[int, int], float]:
        if not self.present[row, col]:
            raise ContractError(f"no bin match at cell ({row}, {col})")
        return ((int(self.target[row, col, 0]), int(self.target[row, col, 1])),
                float(self.weight[row, col]))


def _cell_indices(positions: np.ndarray, width: float, height: float,
                  grid_bins: int) -> np.ndarray:
    """(n, 2) integer (row, col) cells; boundary features clamp inward."""
    col = np.floor(positions[:, 0] * grid_bins / width).astype(np.int64)
    row = np.floor(positions[:, 1] * grid_bins / height).astype(np.int64)
    np.clip(col, 0, grid_bins - 1, out=col)
    np.clip(row, 0, grid_bins - 1, out=row)
    return np.stack([row, col], axis=1)


def build_bin_matrix(ms: MatchSet, a: FeatureSet, b: FeatureSet,
                     cfg: AnchorConfig) -> BinMatchMatrix:
    """Tally weighted votes per query cell and keep the winning B cell.

    Vote ties go to the lowest (row, col) candidate cell. Cells whose
    winning vote sum is zero (only zero-weight matches) stay empty.
    """
    g = cfg.grid_bins
    present = np.zeros((g, g), dtype=bool)
    target = np.full((g, g, 2), -1, dtype=np.int16)
    weight = np.zeros((g, g), dtype=np.float64)
    if len(ms) == 0:
        return BinMatchMatrix(g, present, target, weight)

    cells_a = _cell_indices(ms.pos_a, a.width, a.height, g)
    cells_b = _cell_indices(ms.pos_b, b.width, b.height, g)
    flat_a = cells_a[:, 0] * g + cells_a[:, 1]
    flat_b = cells_b[:, 0] * g + cells_b[:, 1]

    tally = np.zeros((g * g, g * g), dtype=np.float64)
    np.add.at(tally, (flat_a, flat_b), np.asarray(ms.weight, dtype=np.float64))

    best = np.argmax(tally, axis=1)  # first maximum = lowest (row, col)
    best_w = tally[np.arange(g * g), best]
    occupied = best_w > 0.0

    rows_a, cols_a = np.divmod(np.flatnonzero(occupied), g)
    rows_b, cols_b = np.divmod(best[occupied], g)
    present[rows_a, cols_a] = True
    target[rows_a, cols_a, 0] = rows_b
    target[rows_a, cols_a, 1] = cols_b
    weight[rows_a, cols_a] = best_w[occupied]
    return BinMatchMatrix(g, present, target, weight)


def anchor_cell_score(mat: BinMatchMatrix, row: int, col: int,
                      cfg: AnchorConfig) -> float:
    """Consistency score of the single anchor at cell (row, col).

    Each present neighbor (k, l) in the square window contributes
    ``max(t - ||([row,col] - [k,l]) - (m_anchor - m_neighbor)||, 0)``;
    empty cells contribute nothing. The sum is scaled by the anchor's
    bin-match weight.
    """
    (m_row, m_col), w = mat.entry(row, col)
    g = mat.grid_bins
    t = cfg.tolerance
    total = 0.0
    for k in range(max(0, row - cfg.window), min(g, row + cfg.window + 1)):
        for l in range(max(0, col - cfg.window), min(g, col + cfg.window + 1)):
            if (k, l) == (row, col) and not cfg.include_anchor_self:
                continue
            if not mat.present[k, l]:
                continue
            d_row = (row - k) - (m_row - int(mat.target[k, l, 0]))
            d_col = (col - l) - (m_col - int(mat.target[k, l, 1]))
            residual = float(np.hypot(d_row, d_col))
            if residual < t:
                total += t - residual
    return w * total


def score_bin_matrix(mat: BinMatchMatrix, cfg: AnchorConfig) -> float:
    """Sum of anchor scores over all present cells (vectorized)."""
    anchors = np.argwhere(mat.present)  # (p, 2) row, col
    p = anchors.shape[0]
    if p < 2 and not cfg.include_anchor_self:
        return 0.0
    targets = mat.target[anchors[:, 0], anchors[:, 1]].astype(np.float64)
    weights = mat.weight[anchors[:, 0], anchors[:, 1]]
    cells = anchors.astype(np.float64)

    d_cell = cells[:, None, :] - cells[None, :, :]  # (p, p, 2)
    d_target = targets[:, None, :] - targets[None, :, :]
    residual = np.linalg.norm(d_cell - d_target, axis=2)
    contrib = np.maximum(cfg.tolerance - residual, 0.0)

    in_window = np.all(np.abs(d_cell) <= cfg.window, axis=2)
    if not cfg.include_anchor_self:
        np.fill_diagonal(in_window, False)
    contrib *= in_window
    return float(weights @ contrib.sum(axis=1))


def anchor_score(ms: MatchSet, a: FeatureSet, b: FeatureSet,
                 cfg: AnchorConfig) -> float:
    """Pair similarity under the anchor-points method."""
    return score_bin_matrix(build_bin_matrix(ms, a, b, cfg), cfg)


def write_bin_matrix_dump(mat: BinMatchMatrix, path) -> None:
    """One line per present entry: ``row col -> m_row m_col weight``."""
    with open(Path(path), "w", encoding="utf-8") as fh:
        for row, col in np.argwhere(mat.present):
            (m_row, m_col), w = mat.entry(int(row), int(col))
            fh.write(f"{row} {col} -> {m_row} {m_col} {w!r}\n")

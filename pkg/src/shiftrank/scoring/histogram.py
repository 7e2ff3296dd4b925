"""Histogram-of-shifts scorer.

Every match casts a Gaussian vote, centered on its (shift_x, shift_y),
into a 2D grid of square bins covering all possible shifts
[-W, W] x [-H, H]. The bin score is

    s[i, j] = sum_k  w_k * exp(-((x_k - cx_ij)^2 + (y_k - cy_ij)^2)
                               / (2 * sigma^2))

and the pair similarity is the maximum bin value; the argmax bin center
is reported as the dominant shift (directly usable for steering in
teach-and-repeat setups).

Votes farther than ``truncation_radius * sigma`` from a bin center are
dropped, which bounds the per-bin error by exp(-r^2/2) times the weight
beyond the radius. Set ``truncation_radius=None`` for exact all-bin
voting (used by the oracle tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..matching import MatchSet, WeightScheme


@dataclass(frozen=True)
class HistogramConfig:
    bin_size: float = 15.0
    sigma: float = 22.5
    truncation_radius: float | None = 3.0  # in multiples of sigma; None = exact
    weight_scheme: WeightScheme = WeightScheme.FS

    def __post_init__(self):
        if not self.bin_size > 0:
            raise ConfigError(f"bin_size must be > 0, got {self.bin_size}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if self.truncation_radius is not None and not self.truncation_radius >= 1:
            raise ConfigError(
                f"truncation_radius must be >= 1 (or None), "
                f"got {self.truncation_radius}")


@dataclass(frozen=True)
class ShiftHistogram:
    """Vote grid over shifts; ``bins[row, col]`` maps to (dy, dx)."""

    bins: np.ndarray  # (n_y, n_x) float64, nonnegative
    origin: tuple[float, float]  # shift value at the center of bin (0, 0)
    bin_size: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.bins.shape

    def bin_center(self, row: int, col: int) -> tuple[float, float]:
        ox, oy = self.origin
        return (ox + col * self.bin_size, oy + row * self.bin_size)


@dataclass(frozen=True)
class HistogramResult:
    score: float
    dominant_shift: tuple[float, float]
    degenerate: bool = field(default=False)  # no matches: score 0, shift (0, 0)


def _grid_geometry(dims: tuple[float, float], bin_size: float):
    width, height = dims
    n_x = math.ceil(2.0 * width / bin_size)
    n_y = math.ceil(2.0 * height / bin_size)
    # bin (0, 0) spans [-W, -W + bin); its center sits half a bin in
    origin = (-width + 0.5 * bin_size, -height + 0.5 * bin_size)
    return n_x, n_y, origin


def build_histogram(ms: MatchSet, dims: tuple[float, float],
                    cfg: HistogramConfig) -> ShiftHistogram:
    """Accumulate all match votes into the shift grid.

    ``dims`` is the (width, height) of the compared images; shifts must
    lie inside [-width, width] x [-height, height]. An empty match set
    yields an all-zero histogram.
    """
    n_x, n_y, origin = _grid_geometry(dims, cfg.bin_size)
    bins = np.zeros((n_y, n_x), dtype=np.float64)
    if len(ms) == 0:
        return ShiftHistogram(bins, origin, cfg.bin_size)

    sx = np.asarray(ms.shift_x, dtype=np.float64)
    sy = np.asarray(ms.shift_y, dtype=np.float64)
    w = np.asarray(ms.weight, dtype=np.float64)
    inv_two_sigma_sq = 1.0 / (2.0 * cfg.sigma * cfg.sigma)
    ox, oy = origin

    if cfg.truncation_radius is None or math.isinf(cfg.truncation_radius):
        # Exact: the kernel is separable, so accumulate the weighted
        # outer product of per-axis Gaussians over all bins.
        cx = ox + cfg.bin_size * np.arange(n_x)
        cy = oy + cfg.bin_size * np.arange(n_y)
        gx = np.exp(-((sx[:, None] - cx[None, :]) ** 2) * inv_two_sigma_sq)
        gy = np.exp(-((sy[:, None] - cy[None, :]) ** 2) * inv_two_sigma_sq)
        bins += (gy * w[:, None]).T @ gx
        return ShiftHistogram(bins, origin, cfg.bin_size)

    radius = cfg.truncation_radius * cfg.sigma
    radius_sq = radius * radius
    reach = int(math.ceil(radius / cfg.bin_size)) + 1
    base_col = np.floor((sx - (ox - 0.5 * cfg.bin_size)) / cfg.bin_size).astype(np.int64)
    base_row = np.floor((sy - (oy - 0.5 * cfg.bin_size)) / cfg.bin_size).astype(np.int64)

    for d_row in range(-reach, reach + 1):
        rows = base_row + d_row
        row_ok = (rows >= 0) & (rows < n_y)
        if not row_ok.any():
            continue
        dy = sy - (oy + rows * cfg.bin_size)
        dy_sq = dy * dy
        for d_col in range(-reach, reach + 1):
            cols = base_col + d_col
            dx = sx - (ox + cols * cfg.bin_size)
            d_sq = dx * dx + dy_sq
            ok = row_ok & (cols >= 0) & (cols < n_x) & (d_sq <= radius_sq)
            if not ok.any():
                continue
            np.add.at(bins, (rows[ok], cols[ok]),
                      w[ok] * np.exp(-d_sq[ok] * inv_two_sigma_sq))
    return ShiftHistogram(bins, origin, cfg.bin_size)


def histogram_score(ms: MatchSet, dims: tuple[float, float],
                    cfg: HistogramConfig) -> HistogramResult:
    """Pair similarity = maximum bin; argmax ties go to row-major first."""
    if len(ms) == 0:
        return HistogramResult(0.0, (0.0, 0.0), degenerate=True)
    hist = build_histogram(ms, dims, cfg)
    flat = int(np.argmax(hist.bins))  # C order: first maximum row-major
    row, col = np.unravel_index(flat, hist.bins.shape)
    return HistogramResult(float(hist.bins[row, col]),
                           hist.bin_center(int(row), int(col)))


def write_histogram_dump(hist: ShiftHistogram, path) -> None:
    """Plain-text grid dump for external heat-map plotting."""
    with open(Path(path), "w", encoding="utf-8") as fh:
        fh.write(f"# origin {hist.origin[0]!r} {hist.origin[1]!r} "
                 f"bin_size {hist.bin_size!r}\n")
        for row in hist.bins:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")

"""Candidate similarity scorers.

Each scorer turns a weighted :class:`~shiftrank.matching.MatchSet` into
a single nonnegative similarity score. Three are model-free (histogram
of shifts, anchor points, aggregated score); the RANSAC homography
scorer is the model-based reference.
"""

from .aggregate import AggregateConfig, aggregate_score
from .anchor import (
    AnchorConfig,
    BinMatchMatrix,
    anchor_cell_score,
    anchor_score,
    build_bin_matrix,
    score_bin_matrix,
)
from .histogram import (
    HistogramConfig,
    HistogramResult,
    ShiftHistogram,
    build_histogram,
    histogram_score,
)
from .ransac import (
    RansacConfig,
    RansacResult,
    count_inliers,
    fit_homography,
    ransac_score,
    reprojection_errors,
)

SCORER_NAMES = ("histogram", "anchor", "aggregate", "ransac")

__all__ = [
    "AggregateConfig",
    "AnchorConfig",
    "BinMatchMatrix",
    "HistogramConfig",
    "HistogramResult",
    "RansacConfig",
    "RansacResult",
    "SCORER_NAMES",
    "ShiftHistogram",
    "aggregate_score",
    "anchor_cell_score",
    "anchor_score",
    "build_bin_matrix",
    "build_histogram",
    "count_inliers",
    "fit_homography",
    "histogram_score",
    "ransac_score",
    "reprojection_errors",
    "score_bin_matrix",
]

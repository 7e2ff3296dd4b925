"""Aggregated-shift scorer.

Cheapest of the model-free scorers: compute every match's shift, take
the unweighted mean shift, and reward matches whose absolute deviation
from that mean is small. Each match contributes

    w_k * ((x_im - |dx_k - mean_dx|)^2 + (y_im - |dy_k - mean_dy|)^2)

where (x_im, y_im) is the query image size. Deviations are capped at
the image size so a wildly inconsistent match contributes zero to that
axis rather than a (spurious) positive square; a warning is raised when
the cap engages because it signals a very spread-out shift field.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShiftSpreadWarning
from ..matching import MatchSet, WeightScheme


@dataclass(frozen=True)
class AggregateConfig:
    weight_scheme: WeightScheme = WeightScheme.DMF

    def __post_init__(self):
        if not isinstance(self.weight_scheme, WeightScheme):
            raise ConfigError(
                f"weight_scheme must be a WeightScheme, got {self.weight_scheme!r}")


def aggregate_score(ms: MatchSet, width: float, height: float,
                    cfg: AggregateConfig | None = None) -> float:
    """Pair similarity from shift agreement around the mean shift.

    The mean shift is unweighted and the total is not normalized by the
    match count, so pairs with more matches score higher by design.
    Returns 0.0 for an empty match set.
    """
    del cfg  # only carries the weight scheme, applied upstream
    if len(ms) == 0:
        return 0.0
    sx = np.asarray(ms.shift_x, dtype=np.float64)
    sy = np.asarray(ms.shift_y, dtype=np.float64)
    dev_x = np.abs(sx - sx.mean())
    dev_y = np.abs(sy - sy.mean())
    base_x = width - dev_x
    base_y = height - dev_y
    if np.any(base_x < 0.0) or np.any(base_y < 0.0):
        warnings.warn(
            "shift deviation exceeds image size; clamping its contribution to 0",
            ShiftSpreadWarning, stacklevel=2)
        base_x = np.maximum(base_x, 0.0)
        base_y = np.maximum(base_y, 0.0)
    w = np.asarray(ms.weight, dtype=np.float64)
    return float(np.dot(w, base_x * base_x + base_y * base_y))

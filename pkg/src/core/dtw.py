"""
Dynamic Time Warp distance between two one-dimensional curves.

Steps {(1,0), (0,1), (1,1)}, unweighted, both endpoints anchored, no
normalization by path length.
"""

from enum import Enum
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.errors import CurveError


class CostKind(str, Enum):
    ABSOLUTE = "absolute"
    SQUARED = "squared"


class DtwConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    cost: CostKind = CostKind.ABSOLUTE
    window: Optional[int] = Field(None, ge=0, description="Sakoe-Chiba band half-width in points")


DEFAULT_DTW = DtwConfig()


def _pointwise_cost(x: np.ndarray, y: np.ndarray, cost: CostKind) -> np.ndarray:
    diff = x[:, None] - y[None, :]
    if cost is CostKind.SQUARED:
        return diff * diff
    return np.abs(diff)


def dtw_distance(x: Sequence[float], y: Sequence[float], cfg: DtwConfig = DEFAULT_DTW) -> float:
    """Minimum cumulative alignment cost of x against y."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise CurveError("dtw_distance needs two non-empty sequences")
    window = cfg.window
    if window is not None and abs(n - m) > window:
        raise CurveError(f"length difference {abs(n - m)} exceeds window {window}")

    cost = _pointwise_cost(x, y, cfg.cost)
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0

    for i in range(1, n + 1):
        if window is None:
            lo, hi = 1, m
        else:
            lo, hi = max(1, i - window), min(m, i + window)
        for j in range(lo, hi + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(
                acc[i - 1, j],  # insertion
                acc[i, j - 1],  # deletion
                acc[i - 1, j - 1],  # match
            )

    return float(acc[n, m])

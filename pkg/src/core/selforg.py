"""
Emergent self-organization measures.

T_lost is read as the fraction of robot-time lost to interference in an
interval, which keeps P_lost comparable across swarm sizes.
"""

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.errors import CurveError, ShapeMismatchError
from src.models.curves import InterferenceCurve, PerformanceCurve, require_compatible


class SelfOrgInput(BaseModel):
    """Curves for two swarm sizes N1 < N2 plus the single-robot baseline."""

    model_config = ConfigDict(frozen=True)

    perf_1: Optional[PerformanceCurve] = None
    intf_1: Optional[InterferenceCurve] = None
    perf_n1: PerformanceCurve
    intf_n1: InterferenceCurve
    perf_n2: PerformanceCurve
    intf_n2: InterferenceCurve

    @model_validator(mode="after")
    def _ordered(self):
        if not self.n1 < self.n2:
            raise ValueError(f"swarm sizes must satisfy N1 < N2, got {self.n1} and {self.n2}")
        return self

    @property
    def n1(self) -> int:
        return self.perf_n1.swarm_size

    @property
    def n2(self) -> int:
        return self.perf_n2.swarm_size


def perf_lost(
    perf: PerformanceCurve,
    intf: InterferenceCurve,
    perf_1: Optional[PerformanceCurve] = None,
    intf_1: Optional[InterferenceCurve] = None,
) -> np.ndarray:
    """P_lost per interval; N is taken from perf.swarm_size.

    For N > 1 the loss N independent robots would have suffered is subtracted,
    so values can be negative.
    """
    require_compatible(perf, intf)
    own = perf.array * intf.array
    n = perf.swarm_size
    if n == 1:
        return own
    if perf_1 is None or intf_1 is None:
        raise CurveError(f"P_lost for N={n} needs the N=1 baseline curves")
    if perf_1.swarm_size != 1:
        raise CurveError(f"baseline curve has swarm size {perf_1.swarm_size}, expected 1")
    require_compatible(perf, perf_1, intf_1)
    return own - n * (perf_1.array * intf_1.array)


def spatial_selforg(data: SelfOrgInput) -> float:
    """Sum over t of (N2/N1) * P_lost(N1, t) - P_lost(N2, t); positive means sub-linear interference growth."""
    lost_1 = perf_lost(data.perf_n1, data.intf_n1, data.perf_1, data.intf_1)
    lost_2 = perf_lost(data.perf_n2, data.intf_n2, data.perf_1, data.intf_1)
    require_compatible(data.perf_n1, data.perf_n2)
    return spatial_selforg_lost(lost_1, lost_2, data.n1, data.n2)


def spatial_selforg_lost(lost_n1: Sequence[float], lost_n2: Sequence[float], n1: int, n2: int) -> float:
    """Same measure from precomputed P_lost sequences."""
    lost_n1 = np.asarray(lost_n1, dtype=float)
    lost_n2 = np.asarray(lost_n2, dtype=float)
    if lost_n1.shape != lost_n2.shape:
        raise ShapeMismatchError(f"P_lost lengths differ: {lost_n1.size} vs {lost_n2.size}")
    if not 0 < n1 < n2:
        raise CurveError(f"swarm sizes must satisfy 0 < N1 < N2, got {n1} and {n2}")
    return float(np.sum((n2 / n1) * lost_n1 - lost_n2))


def task_selforg(perf_n1: PerformanceCurve, perf_n2: PerformanceCurve, n1: Optional[int] = None, n2: Optional[int] = None) -> float:
    """Sum over t of P(N2, t) - (N2/N1) * P(N1, t); positive means super-linear gain."""
    require_compatible(perf_n1, perf_n2)
    n1 = perf_n1.swarm_size if n1 is None else n1
    n2 = perf_n2.swarm_size if n2 is None else n2
    if not 0 < n1 < n2:
        raise CurveError(f"swarm sizes must satisfy 0 < N1 < N2, got {n1} and {n2}")
    return float(np.sum(perf_n2.array - (n2 / n1) * perf_n1.array))

"""
Karp-Flatt scalability.

Per interval the throughput speedup psi_t = P(N2, t) / P(N1, t) is turned into a
serial fraction

    e_t = (1/psi_t - 1/r) / (1 - 1/r),   r = N2 / N1

and the measure is the sum of (1 - e_t): 1 per interval at perfect speedup,
0 with no speedup, negative when the larger swarm does worse.
"""

import logging
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.curves import PerformanceCurve, require_compatible

logger = logging.getLogger(__name__)


class ZeroPolicy(str, Enum):
    SKIP = "skip"
    CLAMP = "clamp"


class ScalabilityInput(BaseModel):
    model_config = ConfigDict(frozen=True)

    perf_n1: PerformanceCurve
    perf_n2: PerformanceCurve
    zero_policy: ZeroPolicy = ZeroPolicy.SKIP
    epsilon: float = Field(1e-9, gt=0.0, description="Substitute for zero performance under clamp")
    literal: bool = Field(
        False, description="Use P(N2)/P(N1) directly as the serial-fraction numerator term"
    )

    @model_validator(mode="after")
    def _ordered(self):
        require_compatible(self.perf_n1, self.perf_n2)
        if not self.n1 < self.n2:
            raise ValueError(f"scalability requires N1 < N2, got {self.n1} and {self.n2}")
        return self

    @property
    def n1(self) -> int:
        return self.perf_n1.swarm_size

    @property
    def n2(self) -> int:
        return self.perf_n2.swarm_size


def serial_fractions(data: ScalabilityInput) -> np.ndarray:
    """e_t per interval; NaN marks intervals dropped by the skip policy."""
    p1 = data.perf_n1.array.copy()
    p2 = data.perf_n2.array.copy()
    zero = (p1 == 0.0) | (p2 == 0.0)
    if data.zero_policy is ZeroPolicy.CLAMP:
        p1 = np.maximum(p1, data.epsilon)
        p2 = np.maximum(p2, data.epsilon)
    else:
        p1 = np.where(zero, 1.0, p1)
        p2 = np.where(zero, 1.0, p2)

    r = data.n2 / data.n1
    if data.literal:
        term = p2 / p1
    else:
        term = p1 / p2  # 1 / psi_t
    e = (term - 1.0 / r) / (1.0 - 1.0 / r)
    if data.zero_policy is ZeroPolicy.SKIP:
        e = np.where(zero, np.nan, e)
    return e


def karp_flatt_scalability(data: ScalabilityInput) -> float:
    e = serial_fractions(data)
    skipped = int(np.isnan(e).sum())
    if skipped:
        logger.debug(f"Skipped {skipped}/{e.size} intervals with zero performance")
    return float(np.nansum(1.0 - e))

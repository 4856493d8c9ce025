"""
Curve data model.

A curve holds one value per measurement interval (``interval_len`` simulator
timesteps per point). Curves are immutable pydantic records; every transform
returns a new curve.
"""

import logging
import math
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.errors import CurveError, ShapeMismatchError

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL_LEN = 1000
DEFAULT_EPSILON = 1e-9
CI_Z = 1.96


class _Curve(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    values: Tuple[float, ...] = Field(..., min_length=1, description="One value per interval")
    interval_len: int = Field(DEFAULT_INTERVAL_LEN, gt=0, description="Timesteps per point")

    @field_validator("values")
    @classmethod
    def _finite(cls, v):
        for i, x in enumerate(v):
            if not math.isfinite(x):
                raise ValueError(f"value[{i}] is not finite: {x}")
        return v

    @property
    def array(self) -> np.ndarray:
        arr = np.asarray(self.values, dtype=float)
        arr.setflags(write=False)
        return arr

    def __len__(self) -> int:
        return len(self.values)

    def replace_values(self, values: Sequence[float]):
        """Same metadata, new values (validated)."""
        data = self.model_dump()
        data["values"] = tuple(float(x) for x in values)
        return self.__class__(**data)


class PerformanceCurve(_Curve):
    """P(N, controller, t): performance per interval, never negative."""

    swarm_size: int = Field(1, gt=0)
    controller_id: str = Field("", description="Controller under test")
    condition_tag: str = Field("ideal", description="Free label for the run condition")

    @field_validator("values")
    @classmethod
    def _non_negative(cls, v):
        for i, x in enumerate(v):
            if x < 0:
                raise ValueError(f"performance value[{i}] is negative: {x}")
        return v


class InterferenceCurve(_Curve):
    """T_lost(N, t): fraction of active robot-time spent avoiding other robots."""

    swarm_size: int = Field(1, gt=0)
    controller_id: str = ""
    condition_tag: str = "ideal"

    @field_validator("values")
    @classmethod
    def _fraction(cls, v):
        for i, x in enumerate(v):
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"interference value[{i}] outside [0, 1]: {x}")
        return v


class PopulationCurve(BaseModel):
    """N_S(t): tasked swarm size at the end of each interval."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    values: Tuple[int, ...] = Field(..., min_length=1)
    interval_len: int = Field(DEFAULT_INTERVAL_LEN, gt=0)

    @field_validator("values")
    @classmethod
    def _non_negative(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("tasked size cannot be negative")
        return v

    def __len__(self) -> int:
        return len(self.values)


class CurveBundle(BaseModel):
    """Everything one run (or a run average) produces."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    performance: PerformanceCurve
    interference: InterferenceCurve
    population: PopulationCurve
    run_seed: int = 0

    @model_validator(mode="after")
    def _aligned(self):
        lengths = {len(self.performance), len(self.interference), len(self.population)}
        if len(lengths) != 1:
            raise ValueError(f"bundle members differ in length: {sorted(lengths)}")
        cadences = {
            self.performance.interval_len,
            self.interference.interval_len,
            self.population.interval_len,
        }
        if len(cadences) != 1:
            raise ValueError(f"bundle members differ in interval_len: {sorted(cadences)}")
        limit = self.performance.swarm_size
        if any(x > limit for x in self.population.values):
            raise ValueError(f"tasked size exceeds swarm size {limit}")
        return self

    @property
    def swarm_size(self) -> int:
        return self.performance.swarm_size

    @property
    def controller_id(self) -> str:
        return self.performance.controller_id

    @property
    def condition_tag(self) -> str:
        return self.performance.condition_tag

    @property
    def interval_len(self) -> int:
        return self.performance.interval_len

    def __len__(self) -> int:
        return len(self.performance)


class CurveSpread(BaseModel):
    """Per-point 95% confidence half-widths matching a mean CurveBundle."""

    model_config = ConfigDict(frozen=True)

    performance: Tuple[float, ...]
    interference: Tuple[float, ...]
    population: Tuple[float, ...]
    n_runs: int = Field(..., ge=2)


def require_compatible(*curves) -> None:
    """Raise ShapeMismatchError unless all curves share length and interval_len."""
    if not curves:
        return
    first = curves[0]
    for other in curves[1:]:
        if len(other) != len(first):
            raise ShapeMismatchError(
                f"curve lengths differ: {len(first)} vs {len(other)}"
            )
        if other.interval_len != first.interval_len:
            raise ShapeMismatchError(
                f"interval_len differs: {first.interval_len} vs {other.interval_len}"
            )


def aggregate_events(
    events: Sequence[float],
    interval_len: int,
    swarm_size: int = 1,
    controller_id: str = "",
    condition_tag: str = "ideal",
) -> PerformanceCurve:
    """Turn per-timestep event counts into a per-interval rate curve.

    A trailing partial interval is dropped.
    """
    if interval_len < 1:
        raise CurveError(f"interval_len must be >= 1, got {interval_len}")
    raw = np.asarray(events, dtype=float)
    if raw.size == 0:
        raise CurveError("empty event stream")
    if np.any(raw < 0):
        raise CurveError("event counts cannot be negative")
    n_points = raw.size // interval_len
    if n_points == 0:
        raise CurveError(
            f"event stream of {raw.size} steps is shorter than one interval ({interval_len})"
        )
    if raw.size % interval_len:
        logger.debug(f"Truncating {raw.size % interval_len} trailing steps")
    per_interval = raw[: n_points * interval_len].reshape(n_points, interval_len).sum(axis=1)
    return PerformanceCurve(
        values=tuple(float(x) for x in per_interval / interval_len),
        interval_len=interval_len,
        swarm_size=swarm_size,
        controller_id=controller_id,
        condition_tag=condition_tag,
    )


def reciprocal_transform(curve: PerformanceCurve, epsilon: float = DEFAULT_EPSILON) -> PerformanceCurve:
    """Flip a smaller-is-better measure into a larger-is-better one."""
    if not epsilon > 0:
        raise CurveError(f"epsilon must be positive, got {epsilon}")
    return curve.replace_values(1.0 / np.maximum(curve.array, epsilon))


def _half_width(stack: np.ndarray) -> np.ndarray:
    n = stack.shape[0]
    return CI_Z * stack.std(axis=0, ddof=1) / math.sqrt(n)


def mean_over_runs(bundles: Sequence[CurveBundle]) -> Tuple[CurveBundle, CurveSpread]:
    """Pointwise mean of repeated runs with normal-approximation 95% half-widths.

    The mean tasked size is rounded to the nearest integer; its exact spread is
    still reported.
    """
    if len(bundles) < 2:
        raise CurveError(f"mean_over_runs needs at least 2 bundles, got {len(bundles)}")
    first = bundles[0]
    for b in bundles[1:]:
        require_compatible(first.performance, b.performance)
        if (b.swarm_size, b.controller_id) != (first.swarm_size, first.controller_id):
            raise ShapeMismatchError(
                "bundles come from different swarm sizes or controllers: "
                f"({first.swarm_size}, {first.controller_id}) vs ({b.swarm_size}, {b.controller_id})"
            )

    perf = np.stack([b.performance.array for b in bundles])
    intf = np.stack([b.interference.array for b in bundles])
    pop = np.stack([np.asarray(b.population.values, dtype=float) for b in bundles])

    seeds = {b.run_seed for b in bundles}
    mean = CurveBundle(
        performance=first.performance.replace_values(perf.mean(axis=0)),
        interference=first.interference.replace_values(np.clip(intf.mean(axis=0), 0.0, 1.0)),
        population=PopulationCurve(
            values=tuple(int(x) for x in np.rint(pop.mean(axis=0))),
            interval_len=first.interval_len,
        ),
        run_seed=first.run_seed if len(seeds) == 1 else 0,
    )
    spread = CurveSpread(
        performance=tuple(float(x) for x in _half_width(perf)),
        interference=tuple(float(x) for x in _half_width(intf)),
        population=tuple(float(x) for x in _half_width(pop)),
        n_runs=len(bundles),
    )
    return mean, spread

"""
Scenario (world) configuration and the two built-in presets.
"""

import math
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.curves import DEFAULT_INTERVAL_LEN

BLOCK_FOOTPRINT = 0.01  # m^2 reserved per block when checking placement capacity


class DensityMode(str, Enum):
    VARIABLE = "variable"
    CONSTANT = "constant"


class DistributionKind(str, Enum):
    SINGLE_SOURCE = "single_source"
    RANDOM = "random"
    POWER_LAW = "power_law"


class PerformanceMode(str, Enum):
    TRANSPORT = "transport"  # blocks deposited in the nest
    DISCOVERY = "discovery"  # blocks picked up for the first time


class Density(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: DensityMode = DensityMode.VARIABLE
    robots_per_m2: Optional[float] = Field(None, gt=0.0)

    @model_validator(mode="after")
    def _target(self):
        if self.mode is DensityMode.CONSTANT and self.robots_per_m2 is None:
            raise ValueError("constant density needs robots_per_m2")
        return self


class Nest(BaseModel):
    """Rectangle placed relative to the arena (center as arena fractions)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    center_x: float = Field(0.1, ge=0.0, le=1.0, description="Fraction of arena width")
    center_y: float = Field(0.5, ge=0.0, le=1.0, description="Fraction of arena height")
    width: float = Field(2.0, gt=0.0, description="meters")
    height: float = Field(4.0, gt=0.0, description="meters")

    def bounds(self, arena_w: float, arena_h: float) -> Tuple[float, float, float, float]:
        cx, cy = self.center_x * arena_w, self.center_y * arena_h
        return (cx - self.width / 2, cy - self.height / 2, cx + self.width / 2, cy + self.height / 2)


class Distribution(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: DistributionKind = DistributionKind.RANDOM
    cluster_size: float = Field(2.0, gt=0.0, description="Side of the single-source rectangle (m)")
    clusters: int = Field(4, ge=1, description="Power-law cluster count")
    exponent: float = Field(2.0, gt=1.0, description="Power-law size exponent")


class RobotSpec(BaseModel):
    """Calibration knobs of the kinematic robot model."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    speed: float = Field(0.1, gt=0.0, description="Maximum speed, m/step")
    max_turn: float = Field(math.pi / 2, gt=0.0, description="Full scale of turn actuation, rad/step")
    interference_radius: float = Field(0.3, gt=0.0)
    avoid_duration: int = Field(10, ge=1)
    pickup_radius: float = Field(0.2, gt=0.0)
    sense_radius: float = Field(1.0, gt=0.0)


class WorldConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    arena_w: float = Field(16.0, gt=0.0)
    arena_h: float = Field(16.0, gt=0.0)
    density: Density = Field(default_factory=Density)
    nest: Nest = Field(default_factory=Nest)
    n_robots: int = Field(16, ge=0)
    distribution: Distribution = Field(default_factory=Distribution)
    n_blocks: int = Field(20, ge=1)
    block_respawn: Optional[bool] = Field(None, description="Defaults to True for transport, False for discovery")
    p_rw: float = Field(0.0, ge=0.0, le=1.0)
    block_step: float = Field(0.1, gt=0.0, description="Block random-walk step (m)")
    duration: int = Field(20000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    interval_len: int = Field(DEFAULT_INTERVAL_LEN, ge=1)
    performance: PerformanceMode = PerformanceMode.TRANSPORT
    robot: RobotSpec = Field(default_factory=RobotSpec)

    @model_validator(mode="after")
    def _consistent(self):
        x0, y0, x1, y1 = self.nest.bounds(self.arena_w, self.arena_h)
        if x0 < 0 or y0 < 0 or x1 > self.arena_w or y1 > self.arena_h:
            raise ValueError(
                f"nest {self.nest.width}x{self.nest.height} at "
                f"({self.nest.center_x}, {self.nest.center_y}) does not fit a "
                f"{self.arena_w}x{self.arena_h} arena"
            )
        if self.duration < self.interval_len:
            raise ValueError(f"duration {self.duration} shorter than interval_len {self.interval_len}")
        return self

    @property
    def respawn(self) -> bool:
        if self.block_respawn is not None:
            return self.block_respawn
        return self.performance is PerformanceMode.TRANSPORT

    @property
    def n_intervals(self) -> int:
        return self.duration // self.interval_len

    def for_swarm_size(self, n: int) -> "WorldConfig":
        """Config for n robots.

        Constant density rescales the arena to area n / density, keeping its
        aspect ratio, and scales the nest by the same linear factor.
        """
        data = self.model_dump()
        data["n_robots"] = n
        if self.density.mode is DensityMode.CONSTANT:
            area = max(n, 1) / self.density.robots_per_m2
            factor = math.sqrt(area / (self.arena_w * self.arena_h))
            data["arena_w"] = self.arena_w * factor
            data["arena_h"] = self.arena_h * factor
            data["nest"]["width"] = self.nest.width * factor
            data["nest"]["height"] = self.nest.height * factor
        return WorldConfig(**data)

    def with_seed(self, seed: int) -> "WorldConfig":
        return self.model_copy(update={"seed": seed})


PRESETS: Dict[str, Dict[str, Any]] = {
    # Indoor warehouse: fixed arena, single source, transport, square-wave carry throttling.
    "warehouse": {
        "scenario": {
            "arena_w": 32.0,
            "arena_h": 16.0,
            "density": {"mode": "variable"},
            "distribution": {"kind": "single_source", "cluster_size": 3.0},
            "performance": "transport",
            "block_respawn": True,
        },
        "perturbations": {
            "variance": {"deviation": {"kind": "square", "amplitude": 0.0, "period": 5000}, "target": "carry_speed"},
        },
    },
    # Outdoor search and rescue: constant density, moving power-law targets, sinusoidal throttling.
    "search_rescue": {
        "scenario": {
            "density": {"mode": "constant", "robots_per_m2": 0.0625},
            "distribution": {"kind": "power_law", "clusters": 4, "exponent": 2.0},
            "performance": "discovery",
            "block_respawn": False,
            "p_rw": 0.01,
        },
        "perturbations": {
            "variance": {"deviation": {"kind": "sine", "amplitude": 0.0, "period": 10000}, "target": "all_speed"},
        },
    },
}

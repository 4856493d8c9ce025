"""
Perturbation and disturbance profiles shared by the simulator and the metrics.
"""

import math
from enum import Enum
from typing import FrozenSet, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, model_validator


class WaveKind(str, Enum):
    CONSTANT = "constant"
    SQUARE = "square"
    SINE = "sine"


class ThrottleTarget(str, Enum):
    CARRY_SPEED = "carry_speed"
    ALL_SPEED = "all_speed"


class Waveform(BaseModel):
    """Adversity waveform w(t) in [0, amplitude], zero at t = 0 (with zero phase).

    square: amplitude while sin(2*pi*(t+phase)/period) > 0, else 0
    sine:   amplitude * (1 - cos(2*pi*(t+phase)/period)) / 2
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: WaveKind = WaveKind.CONSTANT
    amplitude: float = Field(0.0, ge=0.0, lt=1.0, description="Throttle fraction")
    period: int = Field(5000, ge=2, description="Waveform period in timesteps")
    phase: int = Field(0, description="Shift in timesteps")

    def values(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind is WaveKind.CONSTANT or self.amplitude == 0.0:
            return np.full(t.shape, self.amplitude)
        angle = 2.0 * math.pi * (t + self.phase) / self.period
        if self.kind is WaveKind.SQUARE:
            return np.where(np.sin(angle) > 1e-12, self.amplitude, 0.0)
        return self.amplitude * (1.0 - np.cos(angle)) / 2.0

    def value(self, t: float) -> float:
        return float(self.values(t))


class VarianceProfile(BaseModel):
    """I_ec(t) and V_dev(t).

    I_ec is the un-throttled maximum speed normalized to a constant level;
    V_dev(t) = I_ec * w(t) so the deviation is a fraction of the ideal.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    ideal: float = Field(1.0, gt=0.0, description="Constant ideal condition level I_ec")
    deviation: Waveform = Field(default_factory=Waveform)
    target: ThrottleTarget = ThrottleTarget.CARRY_SPEED

    @property
    def is_flat(self) -> bool:
        return self.deviation.amplitude == 0.0

    def ideal_at(self, t) -> np.ndarray:
        return np.full(np.shape(t), self.ideal, dtype=float)

    def deviation_at(self, t) -> np.ndarray:
        return self.ideal * self.deviation.values(t)

    def sample(self, n_points: int, interval_len: int) -> Tuple[np.ndarray, np.ndarray]:
        """Per-interval means of (I_ec, V_dev) at the curve cadence."""
        t = np.arange(n_points * interval_len, dtype=float)
        v_dev = self.deviation_at(t).reshape(n_points, interval_len).mean(axis=1)
        i_ec = np.full(n_points, self.ideal, dtype=float)
        return i_ec, v_dev

    def tag(self) -> str:
        if self.is_flat:
            return ""
        return f"throttle-{self.deviation.kind.value}-{self.deviation.amplitude:g}"


class NoiseChannel(str, Enum):
    POSITION_SENSE = "position_sense"
    BEARING_SENSE = "bearing_sense"
    BLOCK_DETECT = "block_detect"
    SPEED_ACTUATION = "speed_actuation"
    TURN_ACTUATION = "turn_actuation"


class NoiseProfile(BaseModel):
    """Zero-mean Gaussian noise; sigma is a fraction of each channel's full scale."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma: float = Field(0.0, ge=0.0)
    channels: FrozenSet[NoiseChannel] = Field(default_factory=lambda: frozenset(NoiseChannel))

    @field_serializer("channels")
    def _sorted_channels(self, channels):
        return sorted(c.value for c in channels)

    def enabled(self, channel: NoiseChannel) -> bool:
        return self.sigma > 0.0 and channel in self.channels

    def tag(self) -> str:
        return f"noise-sigma-{self.sigma:g}" if self.sigma > 0 else ""


class QueueRates(BaseModel):
    """Per-timestep event probabilities of the population queues."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_d: float = Field(0.0, ge=0.0, le=1.0, description="Permanent removal")
    lambda_bd: float = Field(0.0, ge=0.0, le=1.0, description="Temporary removal")
    mu_b: float = Field(0.0, ge=0.0, le=1.0, description="Addition from reserve")
    mu_bd: float = Field(0.0, ge=0.0, le=1.0, description="Return after repair/reallocation")

    @property
    def departure_rate(self) -> float:
        return self.lambda_d + self.lambda_bd

    @property
    def service_rate(self) -> float:
        return self.mu_b + self.mu_bd

    @property
    def is_zero(self) -> bool:
        return self.departure_rate == 0.0 and self.service_rate == 0.0

    def tag(self) -> str:
        if self.is_zero:
            return ""
        return (
            f"pop-{self.lambda_d:g}-{self.lambda_bd:g}-{self.mu_b:g}-{self.mu_bd:g}"
        )


class PopulationProfile(BaseModel):
    """Rates plus the bounds of the tasked population N_S(t)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rates: QueueRates = Field(default_factory=QueueRates)
    max_population: Optional[int] = Field(None, ge=1, description="Defaults to the swarm size")
    initial_tasked: Optional[int] = Field(None, ge=0, description="Defaults to max_population")

    @model_validator(mode="after")
    def _bounded(self):
        if (
            self.max_population is not None
            and self.initial_tasked is not None
            and self.initial_tasked > self.max_population
        ):
            raise ValueError(
                f"initial_tasked {self.initial_tasked} exceeds max_population {self.max_population}"
            )
        return self

    def resolve(self, n_robots: int) -> "PopulationProfile":
        max_pop = self.max_population or n_robots
        initial = max_pop if self.initial_tasked is None else self.initial_tasked
        return PopulationProfile(rates=self.rates, max_population=max_pop, initial_tasked=initial)


class Perturbations(BaseModel):
    """The three disturbance families applied to a run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    noise: NoiseProfile = Field(default_factory=NoiseProfile)
    variance: VarianceProfile = Field(default_factory=VarianceProfile)
    population: PopulationProfile = Field(default_factory=PopulationProfile)

    def condition_tag(self) -> str:
        parts = [self.noise.tag(), self.variance.tag(), self.population.rates.tag()]
        return "+".join(p for p in parts if p) or "ideal"

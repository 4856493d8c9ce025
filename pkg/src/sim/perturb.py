"""
Perturbation injection: speed throttling, Gaussian sensor/actuator noise and
Poisson population dynamics (as per-step Bernoulli trials).

Each family draws only from its own RNG stream, and draws nothing at all when
it is switched off, so a disabled perturbation leaves a run bit-identical.
"""

import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from src.models.profiles import NoiseChannel, NoiseProfile, PopulationProfile, VarianceProfile
from src.models.scenario import RobotSpec

TASKED, ABSENT, REMOVED, RESERVE = 0, 1, 2, 3

ANGLE_CHANNELS = frozenset({NoiseChannel.BEARING_SENSE, NoiseChannel.TURN_ACTUATION})


def wrap_angle(theta):
    """Wrap into (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(theta, dtype=float), 2.0 * math.pi)


def throttle_factor(profile: VarianceProfile, t: float) -> float:
    """Multiplicative speed cap 1 - V_dev(t)/I_ec(t), in (0, 1]."""
    return 1.0 - float(profile.deviation_at(t)) / profile.ideal


@dataclass(frozen=True)
class ChannelScales:
    """Full scale of every noise channel plus the arena used to clamp positions."""

    full_scale: Dict[NoiseChannel, float]
    arena: Tuple[float, float]

    @classmethod
    def for_world(cls, robot: RobotSpec, arena_w: float, arena_h: float) -> "ChannelScales":
        return cls(
            full_scale={
                NoiseChannel.POSITION_SENSE: math.hypot(arena_w, arena_h),
                NoiseChannel.BEARING_SENSE: math.pi,
                NoiseChannel.BLOCK_DETECT: robot.sense_radius,
                NoiseChannel.SPEED_ACTUATION: robot.speed,
                NoiseChannel.TURN_ACTUATION: robot.max_turn,
            },
            arena=(arena_w, arena_h),
        )


def _perturb(value, channel: NoiseChannel, noise: NoiseProfile, rng: np.random.Generator, scales: ChannelScales):
    if not noise.enabled(channel):
        return value
    value = np.asarray(value, dtype=float)
    out = value + rng.normal(0.0, noise.sigma * scales.full_scale[channel], size=value.shape)
    if channel in ANGLE_CHANNELS:
        return wrap_angle(out)
    if channel is NoiseChannel.POSITION_SENSE:
        w, h = scales.arena
        return np.clip(out, 0.0, [w, h])
    return out


def perturb_sense(value, channel: NoiseChannel, noise: NoiseProfile, rng: np.random.Generator, scales: ChannelScales):
    """Noisy reading of a sensed quantity (position, bearing, block offset)."""
    return _perturb(value, channel, noise, rng, scales)


def perturb_act(value, channel: NoiseChannel, noise: NoiseProfile, rng: np.random.Generator, scales: ChannelScales):
    """Noisy execution of an actuation command (speed, turn)."""
    return _perturb(value, channel, noise, rng, scales)


@dataclass(frozen=True)
class PopulationEvents:
    remove_permanent: np.ndarray
    remove_temporary: np.ndarray
    returned: np.ndarray
    added: np.ndarray

    @property
    def empty(self) -> bool:
        return not (
            self.remove_permanent.size or self.remove_temporary.size or self.returned.size or self.added.size
        )


_NO_ROBOTS = np.zeros(0, dtype=int)


def population_events(profile: PopulationProfile, status: np.ndarray, rng: np.random.Generator) -> PopulationEvents:
    """One Bernoulli trial per robot per step; a robot sees at most one event.

    ``status`` holds TASKED / ABSENT / REMOVED / RESERVE per robot.
    """
    rates = profile.rates
    if rates.is_zero or status.size == 0:
        return PopulationEvents(_NO_ROBOTS, _NO_ROBOTS, _NO_ROBOTS, _NO_ROBOTS)
    u = rng.random(status.size)
    tasked = status == TASKED
    permanent = tasked & (u < rates.lambda_d)
    temporary = tasked & ~permanent & (u < rates.lambda_d + rates.lambda_bd)
    returned = (status == ABSENT) & (u < rates.mu_bd)
    # REMOVED is absorbing; only reserve units can join.
    added = (status == RESERVE) & (u < rates.mu_b)
    return PopulationEvents(
        remove_permanent=np.flatnonzero(permanent),
        remove_temporary=np.flatnonzero(temporary),
        returned=np.flatnonzero(returned),
        added=np.flatnonzero(added),
    )

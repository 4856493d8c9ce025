"""
Robot controllers under test.

Controllers decide for a batch of robots at once: ``decide`` receives what the
deciding robots sensed this step (rows of ``Sensed``), their memory store and
the controller RNG stream, and returns one ``Actions`` row per robot. New
controllers plug in through ``CONTROLLERS`` without touching the world.

CRW  correlated random walk while exploring, phototaxis home while carrying,
     no memory.
DPO  tracks sensed blocks with exponentially decaying pheromone densities and
     heads for the block maximizing density / (1 + distance); otherwise CRW.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.models.scenario import RobotSpec
from src.sim.perturb import wrap_angle

logger = logging.getLogger(__name__)


class ControllerKind(str, Enum):
    CRW = "crw"
    DPO = "dpo"


@dataclass
class Sensed:
    """Perceptions of k robots; block arrays are (k, n_blocks)."""

    robot_ids: np.ndarray
    position: np.ndarray  # perceived own position (k, 2)
    heading: np.ndarray
    carrying: np.ndarray
    nest_bearing: np.ndarray  # perceived bearing to the nest beacon
    in_nest: np.ndarray  # perceived
    visible: np.ndarray  # free blocks within sense radius
    offset: np.ndarray  # perceived block offsets (k, n_blocks, 2), 0 where not visible

    def __len__(self) -> int:
        return len(self.robot_ids)

    @property
    def distance(self) -> np.ndarray:
        dist = np.hypot(self.offset[..., 0], self.offset[..., 1])
        return np.where(self.visible, dist, np.inf)

    def subset(self, mask: np.ndarray) -> "Sensed":
        return Sensed(
            robot_ids=self.robot_ids[mask],
            position=self.position[mask],
            heading=self.heading[mask],
            carrying=self.carrying[mask],
            nest_bearing=self.nest_bearing[mask],
            in_nest=self.in_nest[mask],
            visible=self.visible[mask],
            offset=self.offset[mask],
        )


@dataclass
class Actions:
    turn: np.ndarray
    speed: np.ndarray
    pickup: np.ndarray  # block id or -1
    drop: np.ndarray

    @classmethod
    def idle(cls, k: int) -> "Actions":
        return cls(
            turn=np.zeros(k),
            speed=np.zeros(k),
            pickup=np.full(k, -1, dtype=int),
            drop=np.zeros(k, dtype=bool),
        )


class CrwParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    turn_stddev: float = Field(0.3, gt=0.0, description="Std-dev of the per-step heading change (rad)")
    nest_light_position: Optional[tuple[float, float]] = Field(
        None, description="Phototaxis beacon; defaults to the nest center"
    )


class DpoParams(CrwParams):
    decay_rho: float = Field(0.99, gt=0.0, lt=1.0, description="Per-step pheromone decay factor")
    sense_radius: Optional[float] = Field(None, gt=0.0, description="Defaults to the robot sense radius")
    relevance_floor: float = Field(0.05, gt=0.0, description="Density below which a block is forgotten")


@dataclass
class DpoMemory:
    density: np.ndarray  # (n_robots, n_blocks), 0 = not tracked
    position: np.ndarray  # (n_robots, n_blocks, 2) last seen position


class Controller(ABC):
    kind: ControllerKind

    def __init__(self, params: CrwParams, robot: RobotSpec):
        self.params = params
        self.robot = robot

    @property
    def controller_id(self) -> str:
        return self.kind.value

    @property
    def sense_radius(self) -> float:
        return self.robot.sense_radius

    def beacon(self, nest_center: np.ndarray) -> np.ndarray:
        if self.params.nest_light_position is None:
            return np.asarray(nest_center, dtype=float)
        return np.asarray(self.params.nest_light_position, dtype=float)

    def init_memory(self, n_robots: int, n_blocks: int) -> Any:
        return None

    def observe(self, memory: Any, sensed: Sensed) -> None:
        """Update memory from this step's perceptions (all active robots)."""

    def forget(self, memory: Any, robot_ids: np.ndarray) -> None:
        """Clear the memory of robots re-entering the swarm."""

    def on_pickup(self, memory: Any, robot_id: int, block_id: int) -> None:
        """A robot picked up a block."""

    def snapshot(self, memory: Any, robot_id: int) -> Dict[int, tuple]:
        return {}

    @abstractmethod
    def decide(self, sensed: Sensed, memory: Any, rng: np.random.Generator) -> Actions:
        ...

    def _pickup_or_home(self, sensed: Sensed, actions: Actions) -> np.ndarray:
        """Fill pickup, drop and homing actions; return the mask of robots still undecided."""
        dist = sensed.distance
        if dist.shape[1]:
            nearest = np.argmin(dist, axis=1)
            nearest_dist = dist[np.arange(len(sensed)), nearest]
        else:
            nearest = np.full(len(sensed), -1, dtype=int)
            nearest_dist = np.full(len(sensed), np.inf)

        explorers = ~sensed.carrying
        grab = explorers & (nearest_dist <= self.robot.pickup_radius)
        actions.pickup[grab] = nearest[grab]

        drop = sensed.carrying & sensed.in_nest
        actions.drop[drop] = True

        home = sensed.carrying & ~sensed.in_nest
        actions.turn[home] = wrap_angle(sensed.nest_bearing[home] - sensed.heading[home])
        actions.speed[home] = self.robot.speed

        return explorers & ~grab

    def _wander(self, undecided: np.ndarray, actions: Actions, rng: np.random.Generator) -> None:
        count = int(undecided.sum())
        if count:
            actions.turn[undecided] = rng.normal(0.0, self.params.turn_stddev, size=count)
            actions.speed[undecided] = self.robot.speed


class CrwController(Controller):
    kind = ControllerKind.CRW

    def decide(self, sensed: Sensed, memory: Any, rng: np.random.Generator) -> Actions:
        actions = Actions.idle(len(sensed))
        undecided = self._pickup_or_home(sensed, actions)
        self._wander(undecided, actions, rng)
        return actions


class DpoController(Controller):
    kind = ControllerKind.DPO
    params: DpoParams

    @property
    def sense_radius(self) -> float:
        return self.params.sense_radius or self.robot.sense_radius

    def init_memory(self, n_robots: int, n_blocks: int) -> DpoMemory:
        return DpoMemory(
            density=np.zeros((n_robots, n_blocks)),
            position=np.zeros((n_robots, n_blocks, 2)),
        )

    def observe(self, memory: DpoMemory, sensed: Sensed) -> None:
        ids = sensed.robot_ids
        density = memory.density[ids] * self.params.decay_rho
        seen = sensed.visible
        density[seen] = 1.0
        positions = memory.position[ids]
        absolute = sensed.position[:, None, :] + sensed.offset
        positions[seen] = absolute[seen]

        # A remembered block that should be in view but is not has been taken or moved.
        remembered = positions - sensed.position[:, None, :]
        near = np.hypot(remembered[..., 0], remembered[..., 1]) <= self.robot.pickup_radius
        density[near & ~seen] = 0.0

        density[density < self.params.relevance_floor] = 0.0
        memory.density[ids] = density
        memory.position[ids] = positions

    def forget(self, memory: DpoMemory, robot_ids: np.ndarray) -> None:
        memory.density[robot_ids] = 0.0

    def on_pickup(self, memory: DpoMemory, robot_id: int, block_id: int) -> None:
        memory.density[robot_id, block_id] = 0.0

    def snapshot(self, memory: DpoMemory, robot_id: int) -> Dict[int, tuple]:
        tracked = np.flatnonzero(memory.density[robot_id] > 0)
        return {
            int(b): (
                float(memory.position[robot_id, b, 0]),
                float(memory.position[robot_id, b, 1]),
                float(memory.density[robot_id, b]),
            )
            for b in tracked
        }

    def targets(self, memory: DpoMemory, sensed: Sensed) -> np.ndarray:
        """Tracked block maximizing density / (1 + distance) per robot, -1 if none."""
        density = memory.density[sensed.robot_ids]
        offset = memory.position[sensed.robot_ids] - sensed.position[:, None, :]
        dist = np.hypot(offset[..., 0], offset[..., 1])
        relevance = np.where(density > 0, density / (1.0 + dist), -1.0)
        if relevance.shape[1] == 0:
            return np.full(len(sensed), -1, dtype=int)
        best = np.argmax(relevance, axis=1)
        best[relevance[np.arange(len(sensed)), best] <= 0] = -1
        return best

    def decide(self, sensed: Sensed, memory: DpoMemory, rng: np.random.Generator) -> Actions:
        actions = Actions.idle(len(sensed))
        undecided = self._pickup_or_home(sensed, actions)

        target = self.targets(memory, sensed)
        seek = undecided & (target >= 0)
        if seek.any():
            rows = np.flatnonzero(seek)
            goal = memory.position[sensed.robot_ids[rows], target[rows]]
            delta = goal - sensed.position[rows]
            bearing = np.arctan2(delta[:, 1], delta[:, 0])
            actions.turn[rows] = wrap_angle(bearing - sensed.heading[rows])
            actions.speed[rows] = np.minimum(self.robot.speed, np.hypot(delta[:, 0], delta[:, 1]))

        self._wander(undecided & ~seek, actions, rng)
        return actions


CONTROLLERS = {
    ControllerKind.CRW: (CrwController, CrwParams),
    ControllerKind.DPO: (DpoController, DpoParams),
}


def make_controller(controller_id: str, params: Optional[Dict[str, Any]] = None, robot: Optional[RobotSpec] = None) -> Controller:
    try:
        kind = ControllerKind(controller_id)
    except ValueError:
        known = ", ".join(k.value for k in ControllerKind)
        raise ValueError(f"unknown controller {controller_id!r} (known: {known})") from None
    cls, params_model = CONTROLLERS[kind]
    return cls(params_model(**(params or {})), robot or RobotSpec())

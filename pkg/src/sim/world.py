"""
Deterministic discrete-time 2D foraging world.

Per timestep, in order:
  1. population events (removals, returns, additions)
  2. free blocks random-walk with probability p_rw
  3. active robots sense (with noise), decide, actuate (with noise, throttled)
  4. robots closer than the interference radius start avoiding each other
  5. pickups and drop-offs are resolved
  6. events are recorded

One seed feeds five named RNG streams so that switching a perturbation on or
off never shifts another family's draws.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from src.errors import PlacementError
from src.models.curves import (
    CurveBundle,
    InterferenceCurve,
    PopulationCurve,
    aggregate_events,
)
from src.models.profiles import NoiseChannel, Perturbations, ThrottleTarget
from src.models.scenario import BLOCK_FOOTPRINT, DistributionKind, PerformanceMode, WorldConfig
from src.models.storage import write_frame
from src.sim import perturb
from src.sim.controllers import Actions, Controller, Sensed, make_controller
from src.sim.perturb import ABSENT, REMOVED, RESERVE, TASKED, ChannelScales, wrap_angle

logger = logging.getLogger(__name__)

STREAMS = ("placement", "controllers", "noise", "population", "motion")
MAX_PLACEMENT_ATTEMPTS = 1000
NEST_EDGE_MARGIN = 0.05

_MOVES = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


class RobotMode(IntEnum):
    EXPLORING = 0
    AVOIDING = 1
    HOMING = 2  # carrying a block, phototaxis toward the nest
    CARRYING = 3  # picked up a block this step


class BlockState(IntEnum):
    FREE = 0
    CARRIED = 1
    IN_NEST = 2


@dataclass
class StepEvents:
    collected: int = 0
    first_pickups: int = 0
    avoiding: int = 0
    active: int = 0
    tasked: int = 0


@dataclass
class RunSummary:
    collected: int
    first_pickups: int
    avoiding_steps: int
    active_steps: int
    discovery_distances: List[float] = field(default_factory=list)

    @property
    def mean_discovery_distance(self) -> float:
        if not self.discovery_distances:
            return math.nan
        return float(np.mean(self.discovery_distances))


@dataclass
class SimulationResult:
    bundle: CurveBundle
    summary: RunSummary


def make_streams(seed: int) -> Dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


class WorldState:
    """Arena, nest, robots, blocks and RNG streams of one run.

    ``step`` mutates the state in place.
    """

    def __init__(self, config: WorldConfig, controller: Controller, perturbations: Optional[Perturbations] = None):
        self.config = config
        self.controller = controller
        self.perturbations = perturbations or Perturbations()
        self.population = self.perturbations.population.resolve(config.n_robots)
        self.rng = make_streams(config.seed)
        self.t = 0

        self.arena = np.array([config.arena_w, config.arena_h])
        x0, y0, x1, y1 = config.nest.bounds(config.arena_w, config.arena_h)
        self.nest = np.array([x0, y0, x1, y1])
        self.nest_center = np.array([(x0 + x1) / 2, (y0 + y1) / 2])
        self.beacon = controller.beacon(self.nest_center)
        self.scales = ChannelScales.for_world(config.robot, config.arena_w, config.arena_h)

        n, b = config.n_robots, config.n_blocks
        self.pos = np.zeros((n, 2))
        self.heading = np.zeros(n)
        self.mode = np.full(n, RobotMode.EXPLORING, dtype=int)
        self.countdown = np.zeros(n, dtype=int)
        self.carried = np.full(n, -1, dtype=int)
        self.status = np.full(n, TASKED, dtype=int)
        self.odometer = np.zeros(n)

        self.block_pos = np.zeros((b, 2))
        self.block_cluster = np.zeros(b, dtype=int)
        self.block_state = np.full(b, BlockState.FREE, dtype=int)
        self.block_picked = np.zeros(b, dtype=bool)
        self.cluster_rects = np.zeros((0, 4))

        self.seen_at = np.full((n, b), np.nan)
        self.discovery_distances: List[float] = []
        self.memory: Any = controller.init_memory(n, b)

    # ------------------------------------------------------------------ geometry

    @property
    def n_robots(self) -> int:
        return self.config.n_robots

    def in_nest(self, points: np.ndarray) -> np.ndarray:
        x0, y0, x1, y1 = self.nest
        points = np.asarray(points, dtype=float)
        return (points[..., 0] >= x0) & (points[..., 0] <= x1) & (points[..., 1] >= y0) & (points[..., 1] <= y1)

    def _uniform_outside_nest(self, rng: np.random.Generator, count: int, rect: Optional[np.ndarray] = None) -> np.ndarray:
        lo = np.zeros(2) if rect is None else rect[:2]
        hi = self.arena if rect is None else rect[2:]
        out = np.empty((count, 2))
        filled = 0
        attempts = 0
        while filled < count:
            attempts += 1
            if attempts > MAX_PLACEMENT_ATTEMPTS:
                raise PlacementError(
                    f"could not place {count} objects outside the nest within {rect if rect is not None else 'the arena'}"
                )
            batch = rng.uniform(lo, hi, size=(count - filled, 2))
            ok = batch[~self.in_nest(batch)]
            out[filled : filled + len(ok)] = ok
            filled += len(ok)
        return out

    def _clamp_rect(self, center: np.ndarray, side: float) -> np.ndarray:
        half = min(side, self.config.arena_w, self.config.arena_h) / 2
        cx = float(np.clip(center[0], half, self.config.arena_w - half))
        cy = float(np.clip(center[1], half, self.config.arena_h - half))
        return np.array([cx - half, cy - half, cx + half, cy + half])

    def _nest_edge_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Points just outside the nest boundary."""
        theta = rng.uniform(-math.pi, math.pi, size=count)
        direction = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        half = (self.nest[2:] - self.nest[:2]) / 2
        with np.errstate(divide="ignore"):
            scale = np.minimum(half[0] / np.abs(direction[:, 0]), half[1] / np.abs(direction[:, 1]))
        points = self.nest_center + direction * (scale + NEST_EDGE_MARGIN)[:, None]
        return np.clip(points, 0.0, self.arena)

    # ------------------------------------------------------------------ placement

    def _check_capacity(self) -> None:
        cfg = self.config
        nest_area = (self.nest[2] - self.nest[0]) * (self.nest[3] - self.nest[1])
        capacity = (cfg.arena_w * cfg.arena_h - nest_area) / BLOCK_FOOTPRINT
        if cfg.n_blocks > capacity:
            raise PlacementError(
                f"arena {cfg.arena_w:g}x{cfg.arena_h:g} too small for {cfg.n_blocks} blocks"
            )
        if cfg.distribution.kind is DistributionKind.SINGLE_SOURCE:
            side = min(cfg.distribution.cluster_size, cfg.arena_w, cfg.arena_h)
            if cfg.n_blocks > side * side / BLOCK_FOOTPRINT:
                raise PlacementError(
                    f"single-source cluster {side:g}x{side:g} too small for {cfg.n_blocks} blocks"
                )

    def _power_law_sizes(self, rng: np.random.Generator) -> np.ndarray:
        """Cluster sizes summing to n_blocks, weights from a power law with the configured exponent."""
        dist = self.config.distribution
        weights = rng.pareto(dist.exponent - 1.0, size=dist.clusters) + 1.0
        return rng.multinomial(self.config.n_blocks, weights / weights.sum())

    def place(self) -> None:
        self._check_capacity()
        cfg = self.config
        rng = self.rng["placement"]

        self.pos[:] = self._uniform_outside_nest(rng, cfg.n_robots)
        self.heading[:] = rng.uniform(-math.pi, math.pi, size=cfg.n_robots)

        pop = self.population
        reserve = cfg.n_robots - pop.initial_tasked
        if reserve > 0:
            self.status[cfg.n_robots - reserve :] = RESERVE

        kind = cfg.distribution.kind
        if kind is DistributionKind.RANDOM:
            self.cluster_rects = np.zeros((0, 4))
            self.block_pos[:] = self._uniform_outside_nest(rng, cfg.n_blocks)
            self.block_cluster[:] = -1
        elif kind is DistributionKind.SINGLE_SOURCE:
            opposite = np.array([cfg.arena_w - self.nest_center[0], self.nest_center[1]])
            rect = self._clamp_rect(opposite, cfg.distribution.cluster_size)
            self.cluster_rects = rect[None, :]
            self.block_pos[:] = self._uniform_outside_nest(rng, cfg.n_blocks, rect)
            self.block_cluster[:] = 0
        else:
            sizes = self._power_law_sizes(rng)
            rects = []
            start = 0
            for cluster, size in enumerate(sizes):
                side = max(math.sqrt(max(size, 1) * BLOCK_FOOTPRINT) * 4.0, cfg.robot.pickup_radius * 2)
                center = self._uniform_outside_nest(rng, 1)[0]
                rect = self._clamp_rect(center, side)
                rects.append(rect)
                if size:
                    self.block_pos[start : start + size] = self._uniform_outside_nest(rng, int(size), rect)
                    self.block_cluster[start : start + size] = cluster
                start += size
            self.cluster_rects = np.array(rects)

    def _respawn(self, block: int) -> None:
        rng = self.rng["placement"]
        cluster = self.block_cluster[block]
        rect = self.cluster_rects[cluster] if cluster >= 0 else None
        self.block_pos[block] = self._uniform_outside_nest(rng, 1, rect)[0]
        self.block_state[block] = BlockState.FREE
        self.block_picked[block] = False
        self.seen_at[:, block] = np.nan

    def _release(self, robot: int) -> None:
        """A robot leaving the swarm lets go of its block where it stands."""
        block = self.carried[robot]
        if block < 0:
            return
        self.carried[robot] = -1
        if self.in_nest(self.pos[robot]):
            if self.config.respawn:
                self._respawn(block)
            else:
                self.block_state[block] = BlockState.IN_NEST
                self.block_pos[block] = self.pos[robot]
        else:
            self.block_pos[block] = self.pos[robot]
            self.block_state[block] = BlockState.FREE

    # ------------------------------------------------------------------ step phases

    def _population_phase(self) -> None:
        events = perturb.population_events(self.population, self.status, self.rng["population"])
        if events.empty:
            return
        for robot in np.concatenate([events.remove_permanent, events.remove_temporary]):
            self._release(robot)
        self.status[events.remove_permanent] = REMOVED
        self.status[events.remove_temporary] = ABSENT
        joining = np.concatenate([events.returned, events.added])
        if joining.size:
            self.status[joining] = TASKED
            self.pos[joining] = self._nest_edge_points(self.rng["population"], joining.size)
            self.heading[joining] = self.rng["population"].uniform(-math.pi, math.pi, size=joining.size)
            self.controller.forget(self.memory, joining)
            self.seen_at[joining] = np.nan
        leaving = np.concatenate([events.remove_permanent, events.remove_temporary])
        self.mode[np.concatenate([leaving, joining])] = RobotMode.EXPLORING
        self.countdown[np.concatenate([leaving, joining])] = 0

    def _block_motion_phase(self) -> None:
        p = self.config.p_rw
        if p == 0.0 or self.config.n_blocks == 0:
            return
        rng = self.rng["motion"]
        moving = (rng.random(self.config.n_blocks) < p) & (self.block_state == BlockState.FREE)
        direction = rng.integers(0, 4, size=self.config.n_blocks)
        target = self.block_pos + _MOVES[direction] * self.config.block_step
        target = np.clip(target, 0.0, self.arena)
        moving &= ~self.in_nest(target)
        self.block_pos[moving] = target[moving]

    def _sense(self, ids: np.ndarray) -> Sensed:
        noise = self.perturbations.noise
        rng = self.rng["noise"]
        true_pos = self.pos[ids]
        position = perturb.perturb_sense(true_pos, NoiseChannel.POSITION_SENSE, noise, rng, self.scales)
        delta = self.beacon - position
        bearing = perturb.perturb_sense(
            np.arctan2(delta[:, 1], delta[:, 0]), NoiseChannel.BEARING_SENSE, noise, rng, self.scales
        )

        offset = self.block_pos[None, :, :] - true_pos[:, None, :]
        dist = np.hypot(offset[..., 0], offset[..., 1])
        visible = (dist <= self.controller.sense_radius) & (self.block_state == BlockState.FREE)[None, :]
        if noise.enabled(NoiseChannel.BLOCK_DETECT) and visible.any():
            offset[visible] = perturb.perturb_sense(
                offset[visible], NoiseChannel.BLOCK_DETECT, noise, rng, self.scales
            )
        offset[~visible] = 0.0

        return Sensed(
            robot_ids=ids,
            position=np.asarray(position, dtype=float),
            heading=self.heading[ids].copy(),
            carrying=self.carried[ids] >= 0,
            nest_bearing=np.asarray(bearing, dtype=float),
            in_nest=self.in_nest(position),
            visible=visible,
            offset=offset,
        )

    def _speed_cap(self, ids: np.ndarray) -> np.ndarray:
        factor = perturb.throttle_factor(self.perturbations.variance, self.t)
        cap = np.full(ids.size, self.config.robot.speed)
        if factor < 1.0:
            if self.perturbations.variance.target is ThrottleTarget.CARRY_SPEED:
                throttled = self.carried[ids] >= 0
            else:
                throttled = np.ones(ids.size, dtype=bool)
            cap[throttled] *= factor
        return cap

    def _move(self, ids: np.ndarray, turn: np.ndarray, speed: np.ndarray) -> None:
        noise = self.perturbations.noise
        rng = self.rng["noise"]
        cap = self._speed_cap(ids)
        speed = np.minimum(speed, cap)
        moving = speed > 0
        if moving.any() and noise.enabled(NoiseChannel.SPEED_ACTUATION):
            speed[moving] = perturb.perturb_act(speed[moving], NoiseChannel.SPEED_ACTUATION, noise, rng, self.scales)
            speed = np.clip(speed, 0.0, cap)
        if noise.enabled(NoiseChannel.TURN_ACTUATION) and ids.size:
            turn = perturb.perturb_act(turn, NoiseChannel.TURN_ACTUATION, noise, rng, self.scales)

        heading = wrap_angle(self.heading[ids] + turn)
        step = np.stack([np.cos(heading), np.sin(heading)], axis=1) * speed[:, None]
        target = self.pos[ids] + step

        # Reflect off the walls.
        out_x = (target[:, 0] < 0) | (target[:, 0] > self.config.arena_w)
        out_y = (target[:, 1] < 0) | (target[:, 1] > self.config.arena_h)
        heading = np.where(out_x, wrap_angle(math.pi - heading), heading)
        heading = np.where(out_y, wrap_angle(-heading), heading)
        target = np.clip(target, 0.0, self.arena)

        self.odometer[ids] += np.hypot(*(target - self.pos[ids]).T)
        self.pos[ids] = target
        self.heading[ids] = heading

    def _interference_phase(self, active: np.ndarray) -> None:
        if active.size < 2:
            return
        pts = self.pos[active]
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(dist, np.inf)
        close = dist <= self.config.robot.interference_radius
        free = self.mode[active] != RobotMode.AVOIDING
        trigger = close.any(axis=1) & free
        if not trigger.any():
            return
        rows = np.flatnonzero(trigger)
        nearest = np.argmin(dist[rows], axis=1)
        away = pts[rows] - pts[nearest]
        # Coincident robots split along their index order.
        same = np.hypot(away[:, 0], away[:, 1]) == 0
        away[same] = np.stack([np.cos(rows[same]), np.sin(rows[same])], axis=1)
        robots = active[rows]
        self.heading[robots] = np.arctan2(away[:, 1], away[:, 0])
        self.mode[robots] = RobotMode.AVOIDING
        self.countdown[robots] = self.config.robot.avoid_duration

    def _pickup_drop_phase(self, ids: np.ndarray, actions: Actions, events: StepEvents) -> None:
        reach = 2.0 * self.config.robot.pickup_radius
        for row in np.flatnonzero(actions.pickup >= 0):
            robot, block = int(ids[row]), int(actions.pickup[row])
            if self.carried[robot] >= 0 or self.block_state[block] != BlockState.FREE:
                continue
            if np.hypot(*(self.block_pos[block] - self.pos[robot])) > reach:
                continue
            self.block_state[block] = BlockState.CARRIED
            self.carried[robot] = block
            if self.mode[robot] != RobotMode.AVOIDING:
                self.mode[robot] = RobotMode.CARRYING
            if not self.block_picked[block]:
                self.block_picked[block] = True
                events.first_pickups += 1
            first_seen = self.seen_at[robot, block]
            if not np.isnan(first_seen):
                self.discovery_distances.append(float(self.odometer[robot] - first_seen))
            self.seen_at[:, block] = np.nan
            self.controller.on_pickup(self.memory, robot, block)

        for row in np.flatnonzero(actions.drop):
            robot = int(ids[row])
            block = self.carried[robot]
            if block < 0:
                continue
            self.carried[robot] = -1
            if self.mode[robot] != RobotMode.AVOIDING:
                self.mode[robot] = RobotMode.EXPLORING
            if self.in_nest(self.pos[robot]):
                events.collected += 1
                if self.config.respawn:
                    self._respawn(block)
                else:
                    self.block_state[block] = BlockState.IN_NEST
                    self.block_pos[block] = self.pos[robot]
            else:
                self.block_state[block] = BlockState.FREE
                self.block_pos[block] = self.pos[robot]

    # ------------------------------------------------------------------ public

    def step(self) -> StepEvents:
        events = StepEvents()
        self._population_phase()
        self._block_motion_phase()

        active = np.flatnonzero(self.status == TASKED)
        if active.size:
            sensed = self._sense(active)
            self.seen_at[active] = np.where(
                np.isnan(self.seen_at[active]) & sensed.visible,
                self.odometer[active][:, None],
                self.seen_at[active],
            )
            self.controller.observe(self.memory, sensed)

            avoiding = self.mode[active] == RobotMode.AVOIDING
            deciding = ~avoiding
            actions = self.controller.decide(sensed.subset(deciding), self.memory, self.rng["controllers"])

            turn = np.zeros(active.size)
            speed = np.full(active.size, self.config.robot.speed)  # avoiders keep their escape heading
            turn[deciding] = actions.turn
            speed[deciding] = actions.speed
            self._move(active, turn, speed)

            carrying = self.carried[active] >= 0
            homing = deciding & carrying & (self.mode[active] == RobotMode.CARRYING)
            self.mode[active[homing]] = RobotMode.HOMING

            self.countdown[active[avoiding]] -= 1
            done = active[avoiding][self.countdown[active[avoiding]] <= 0]
            self.mode[done] = np.where(self.carried[done] >= 0, RobotMode.HOMING, RobotMode.EXPLORING)

            self._interference_phase(active)
            self._pickup_drop_phase(active[deciding], actions, events)

        carried = self.carried[self.carried >= 0]
        holders = np.flatnonzero(self.carried >= 0)
        self.block_pos[carried] = self.pos[holders]

        events.active = int(active.size)
        events.avoiding = int(np.sum(self.mode[active] == RobotMode.AVOIDING)) if active.size else 0
        events.tasked = int(np.sum(self.status == TASKED))
        self.t += 1
        return events

    def trace_rows(self) -> List[tuple]:
        active = np.flatnonzero(self.status == TASKED)
        return [
            (self.t, int(i), float(self.pos[i, 0]), float(self.pos[i, 1]), RobotMode(self.mode[i]).name.lower())
            for i in active
        ]


def init_world(config: WorldConfig, controller: Any = "crw", perturbations: Optional[Perturbations] = None, controller_params: Optional[Dict[str, Any]] = None) -> WorldState:
    """Build and populate a world; identical inputs give identical states."""
    if isinstance(controller, str):
        controller = make_controller(controller, controller_params, config.robot)
    world = WorldState(config, controller, perturbations)
    world.place()
    return world


def step(world: WorldState) -> StepEvents:
    return world.step()


def _interference_curve(avoiding: np.ndarray, active: np.ndarray, interval_len: int, n_points: int) -> np.ndarray:
    span = n_points * interval_len
    avoid = avoiding[:span].reshape(n_points, interval_len).sum(axis=1).astype(float)
    act = active[:span].reshape(n_points, interval_len).sum(axis=1).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(act > 0, avoid / np.where(act > 0, act, 1.0), 0.0)
    return np.clip(frac, 0.0, 1.0)


def simulate(
    config: WorldConfig,
    controller_id: str = "crw",
    perturbations: Optional[Perturbations] = None,
    controller_params: Optional[Dict[str, Any]] = None,
    trace_path: Optional[str] = None,
) -> SimulationResult:
    """Run config.duration steps and aggregate the events into curves."""
    perturbations = perturbations or Perturbations()
    world = init_world(config, controller_id, perturbations, controller_params)
    steps = config.duration
    collected = np.zeros(steps, dtype=np.int64)
    first = np.zeros(steps, dtype=np.int64)
    avoiding = np.zeros(steps, dtype=np.int64)
    active = np.zeros(steps, dtype=np.int64)
    tasked = np.zeros(steps, dtype=np.int64)
    trace: List[tuple] = []

    for t in range(steps):
        ev = world.step()
        collected[t] = ev.collected
        first[t] = ev.first_pickups
        avoiding[t] = ev.avoiding
        active[t] = ev.active
        tasked[t] = ev.tasked
        if trace_path:
            trace.extend(world.trace_rows())

    interval = config.interval_len
    n_points = config.n_intervals
    swarm_size = max(config.n_robots, 1)
    condition = perturbations.condition_tag()
    events = first if config.performance is PerformanceMode.DISCOVERY else collected
    performance = aggregate_events(events, interval, swarm_size, controller_id, condition)
    interference = InterferenceCurve(
        values=tuple(float(x) for x in _interference_curve(avoiding, active, interval, n_points)),
        interval_len=interval,
        swarm_size=swarm_size,
        controller_id=controller_id,
        condition_tag=condition,
    )
    population = PopulationCurve(
        values=tuple(int(tasked[(i + 1) * interval - 1]) for i in range(n_points)),
        interval_len=interval,
    )
    bundle = CurveBundle(
        performance=performance,
        interference=interference,
        population=population,
        run_seed=config.seed,
    )

    if trace_path:
        write_frame(trace_path, pd.DataFrame(trace, columns=["timestep", "robot", "x", "y", "mode"]))
        logger.info(f"Wrote {len(trace)} trace rows to {trace_path}")

    summary = RunSummary(
        collected=int(collected.sum()),
        first_pickups=int(first.sum()),
        avoiding_steps=int(avoiding.sum()),
        active_steps=int(active.sum()),
        discovery_distances=list(world.discovery_distances),
    )
    return SimulationResult(bundle=bundle, summary=summary)


def run(
    config: WorldConfig,
    controller_id: str = "crw",
    perturbations: Optional[Perturbations] = None,
    controller_params: Optional[Dict[str, Any]] = None,
) -> CurveBundle:
    return simulate(config, controller_id, perturbations, controller_params).bundle

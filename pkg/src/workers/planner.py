"""
Experiment planning: sweep specifications expanded into seeded run specs.

Seeds depend on (base_seed, controller, swarm size, run index) only, so every
cell of a sweep replays the same random numbers as its ideal baseline and the
sweep value is the only difference between them.
"""

import hashlib
import json
import logging
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.errors import PlanError
from src.core.dtw import CostKind, DtwConfig
from src.core.scalability import ZeroPolicy
from src.models.profiles import NoiseProfile, Perturbations, PopulationProfile, QueueRates, VarianceProfile, Waveform
from src.models.scenario import WorldConfig
from src.sim.controllers import ControllerKind

logger = logging.getLogger(__name__)

DEFAULT_N_RUNS = 24
SEED_MODULUS = 2**64


class SweepAxisKind(str, Enum):
    NOISE_SIGMA = "noise_sigma"
    THROTTLE_AMPLITUDE = "throttle_amplitude"
    POPULATION_RATES = "population_rates"
    P_RW = "p_rw"


class MetricName(str, Enum):
    SPATIAL_SELFORG = "spatial_selforg"
    TASK_SELFORG = "task_selforg"
    SCALABILITY = "scalability"
    REACTIVITY = "reactivity"
    ADAPTABILITY = "adaptability"
    SA_ROBUSTNESS = "sa_robustness"
    PD_ROBUSTNESS = "pd_robustness"
    AVAILABILITY = "availability"
    TASKED_AVAILABILITY = "tasked_availability"


PAIR_METRICS = (MetricName.SPATIAL_SELFORG, MetricName.TASK_SELFORG, MetricName.SCALABILITY)
# Closed-form rows computed from the cell rates alone; the metrics subcommand has no curve input for them.
QUEUE_METRICS = (MetricName.AVAILABILITY, MetricName.TASKED_AVAILABILITY)
SELFORG_METRICS = (MetricName.SPATIAL_SELFORG, MetricName.TASK_SELFORG)

# Metrics each sweep axis feeds; p_rw cells only re-run the size-pair metrics.
AXIS_METRICS: Dict[SweepAxisKind, Tuple[MetricName, ...]] = {
    SweepAxisKind.NOISE_SIGMA: (MetricName.SA_ROBUSTNESS,),
    SweepAxisKind.THROTTLE_AMPLITUDE: (MetricName.REACTIVITY, MetricName.ADAPTABILITY),
    SweepAxisKind.POPULATION_RATES: (
        MetricName.PD_ROBUSTNESS,
        MetricName.AVAILABILITY,
        MetricName.TASKED_AVAILABILITY,
    ),
    SweepAxisKind.P_RW: PAIR_METRICS,
}

SweepValue = Union[float, QueueRates]


def check_swarm_sizes(sizes: Tuple[int, ...]) -> Tuple[int, ...]:
    if not sizes:
        raise ValueError("at least one swarm size is required")
    if any(n < 1 for n in sizes):
        raise ValueError("swarm sizes must be >= 1")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"swarm sizes must be strictly increasing, got {list(sizes)}")
    return sizes


def value_key(value: SweepValue) -> str:
    """Stable text form of a sweep value, used for dedup, ordering and reports."""
    if isinstance(value, QueueRates):
        return f"{value.lambda_d:g}/{value.lambda_bd:g}/{value.mu_b:g}/{value.mu_bd:g}"
    return f"{float(value):g}"


class SweepAxis(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    axis: SweepAxisKind
    values: Tuple[SweepValue, ...] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _typed(self):
        rates_axis = self.axis is SweepAxisKind.POPULATION_RATES
        for v in self.values:
            if rates_axis != isinstance(v, QueueRates):
                expected = "queue rate mappings" if rates_axis else "numbers"
                raise ValueError(f"sweep axis {self.axis.value} takes {expected}, got {v!r}")
            if not rates_axis and v < 0:
                raise ValueError(f"sweep axis {self.axis.value} takes non-negative values, got {v}")
        return self

    def unique_values(self) -> Tuple[SweepValue, ...]:
        seen: Dict[str, SweepValue] = {}
        for v in self.values:
            seen.setdefault(value_key(v), v)
        if len(seen) < len(self.values):
            logger.warning(
                f"Sweep axis {self.axis.value}: dropped {len(self.values) - len(seen)} duplicate value(s)"
            )
        return tuple(seen.values())


class MetricOptions(BaseModel):
    """Knobs forwarded to the metric kernels."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dtw_window: Optional[int] = Field(None, ge=0)
    dtw_cost: CostKind = CostKind.ABSOLUTE
    zero_policy: ZeroPolicy = ZeroPolicy.SKIP
    literal_scalability: bool = False
    literal_reactivity: bool = False
    availability_fraction: float = Field(
        0.5, gt=0.0, le=1.0, description="N_min as a fraction of N for availability rows"
    )

    def dtw_config(self) -> DtwConfig:
        return DtwConfig(cost=self.dtw_cost, window=self.dtw_window)


class ExperimentPlan(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: WorldConfig = Field(default_factory=WorldConfig)
    perturbations: Perturbations = Field(
        default_factory=Perturbations,
        description="Shape of every disturbance (wave kind, period, channels); magnitudes come from sweeps",
    )
    controllers: Tuple[str, ...] = Field(("crw",), min_length=1)
    controller_params: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    swarm_sizes: Tuple[int, ...] = Field((1, 4, 16), min_length=1)
    sweeps: Tuple[SweepAxis, ...] = ()
    n_runs: int = Field(DEFAULT_N_RUNS, ge=2)
    base_seed: int = Field(0, ge=0, lt=SEED_MODULUS)
    metrics: Tuple[MetricName, ...] = tuple(MetricName)
    options: MetricOptions = Field(default_factory=MetricOptions)

    @field_validator("controllers")
    @classmethod
    def _known_controllers(cls, v):
        known = {k.value for k in ControllerKind}
        for c in v:
            if c not in known:
                raise ValueError(f"unknown controller {c!r} (known: {', '.join(sorted(known))})")
        if len(set(v)) != len(v):
            raise ValueError("controllers must be unique")
        return v

    @field_validator("swarm_sizes")
    @classmethod
    def _increasing(cls, v):
        return check_swarm_sizes(v)

    @field_validator("sweeps")
    @classmethod
    def _one_per_axis(cls, v):
        axes = [s.axis for s in v]
        if len(set(axes)) != len(axes):
            raise ValueError("each sweep axis may appear only once")
        return v

    def wants(self, metric: MetricName) -> bool:
        return metric in self.metrics


class RunSpec(BaseModel):
    """One simulator run: a cell coordinate plus the fully resolved inputs."""

    model_config = ConfigDict(frozen=True)

    controller: str
    swarm_size: int
    axis: Optional[SweepAxisKind] = None  # None marks the ideal baseline
    x: Optional[str] = None
    run_index: int
    seed: int
    config: WorldConfig
    perturbations: Perturbations
    controller_params: Dict[str, Any] = Field(default_factory=dict)

    @property
    def baseline(self) -> bool:
        return self.axis is None

    @property
    def cell(self) -> Tuple[str, int, str, str]:
        return (self.controller, self.swarm_size, self.axis.value if self.axis else "", self.x or "")

    @property
    def label(self) -> str:
        where = f"{self.axis.value}={self.x}" if self.axis else "baseline"
        return f"{self.controller} N={self.swarm_size} {where} run={self.run_index}"


def run_seed(base_seed: int, controller: str, swarm_size: int, run_index: int) -> int:
    payload = json.dumps([base_seed, controller, swarm_size, run_index], separators=(",", ":"))
    digest = hashlib.sha256(payload.encode()).digest()
    return int.from_bytes(digest[:8], "big") % SEED_MODULUS


def plan_hash(plan: ExperimentPlan) -> str:
    canonical = json.dumps(plan.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def ideal_perturbations(shape: Perturbations) -> Perturbations:
    """Same disturbance shapes with every magnitude at its ideal value."""
    return Perturbations(
        noise=NoiseProfile(sigma=0.0, channels=shape.noise.channels),
        variance=VarianceProfile(
            ideal=shape.variance.ideal,
            deviation=shape.variance.deviation.model_copy(update={"amplitude": 0.0}),
            target=shape.variance.target,
        ),
        population=PopulationProfile(
            max_population=shape.population.max_population,
            initial_tasked=shape.population.initial_tasked,
        ),
    )


def apply_axis(
    config: WorldConfig, shape: Perturbations, axis: SweepAxisKind, value: SweepValue
) -> Tuple[WorldConfig, Perturbations]:
    ideal = ideal_perturbations(shape)
    if axis is SweepAxisKind.NOISE_SIGMA:
        return config, ideal.model_copy(update={"noise": NoiseProfile(sigma=float(value), channels=shape.noise.channels)})
    if axis is SweepAxisKind.THROTTLE_AMPLITUDE:
        deviation = Waveform(**{**shape.variance.deviation.model_dump(), "amplitude": float(value)})
        variance = VarianceProfile(ideal=shape.variance.ideal, deviation=deviation, target=shape.variance.target)
        return config, ideal.model_copy(update={"variance": variance})
    if axis is SweepAxisKind.POPULATION_RATES:
        population = PopulationProfile(
            rates=value,
            max_population=shape.population.max_population,
            initial_tasked=shape.population.initial_tasked,
        )
        return config, ideal.model_copy(update={"population": population})
    return WorldConfig(**{**config.model_dump(), "p_rw": float(value)}), ideal


def expand(plan: ExperimentPlan) -> List[RunSpec]:
    """Cartesian product controllers x sizes x (baseline + sweep values) x runs.

    Specs come out in canonical order: baseline first, then sweeps in plan order.
    """
    if any(plan.wants(m) for m in SELFORG_METRICS) and 1 not in plan.swarm_sizes:
        raise PlanError("self-organization metrics need swarm size 1 in swarm_sizes")

    cells: List[Tuple[Optional[SweepAxisKind], Optional[SweepValue]]] = [(None, None)]
    for sweep in plan.sweeps:
        cells.extend((sweep.axis, v) for v in sweep.unique_values())

    base_ideal = ideal_perturbations(plan.perturbations)
    specs: List[RunSpec] = []
    for controller in plan.controllers:
        params = plan.controller_params.get(controller, {})
        for n in plan.swarm_sizes:
            for axis, value in cells:
                if axis is None:
                    config, perturbations = plan.scenario, base_ideal
                else:
                    config, perturbations = apply_axis(plan.scenario, plan.perturbations, axis, value)
                sized = config.for_swarm_size(n)
                for run in range(plan.n_runs):
                    seed = run_seed(plan.base_seed, controller, n, run)
                    specs.append(
                        RunSpec(
                            controller=controller,
                            swarm_size=n,
                            axis=axis,
                            x=None if axis is None else value_key(value),
                            run_index=run,
                            seed=seed,
                            config=sized.with_seed(seed),
                            perturbations=perturbations,
                            controller_params=params,
                        )
                    )

    n_base = sum(1 for s in specs if s.baseline)
    logger.info(f"Expanded plan into {len(specs)} runs ({n_base} baseline, {len(specs) - n_base} perturbed)")
    return specs

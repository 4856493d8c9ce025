"""
YAML experiment config.

Sections: ``scenario`` (world keys, plus optional ``preset`` and
``perturbations``), ``controllers``, ``sweeps``, ``metrics`` and ``output``.
Unknown keys are rejected at any depth.
"""

import copy
import logging
from typing import Any, Dict, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.models.profiles import Perturbations
from src.models.scenario import PRESETS, WorldConfig
from src.settings import default_output_dir
from src.workers.planner import (
    DEFAULT_N_RUNS,
    ExperimentPlan,
    MetricName,
    MetricOptions,
    SweepAxis,
    check_swarm_sizes,
)

logger = logging.getLogger(__name__)


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ControllerEntry(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", str_strip_whitespace=True)

    id: str
    params: Dict[str, Any] = Field(default_factory=dict)


class SweepsSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    swarm_sizes: Tuple[int, ...] = (1, 4, 16)
    n_runs: int = Field(DEFAULT_N_RUNS, ge=2)
    base_seed: int = Field(0, ge=0, lt=2**64)
    axes: Tuple[SweepAxis, ...] = ()

    @field_validator("swarm_sizes")
    @classmethod
    def _increasing(cls, v):
        return check_swarm_sizes(v)


class MetricsSection(MetricOptions):
    requested: Tuple[MetricName, ...] = tuple(MetricName)

    def options(self) -> MetricOptions:
        return MetricOptions(**self.model_dump(exclude={"requested"}))


class OutputSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", str_strip_whitespace=True)

    dir: str = Field(default_factory=default_output_dir)
    curves_name: str = "curves.csv"
    trace: bool = Field(False, description="Write a per-step robot trace next to the curves")
    archive_bundles: bool = Field(True, description="Keep every run's CurveBundle under <dir>/bundles")


class ConfigFile(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", str_strip_whitespace=True)

    preset: Optional[str] = None
    scenario: WorldConfig = Field(default_factory=WorldConfig)
    perturbations: Perturbations = Field(default_factory=Perturbations)
    controllers: Tuple[ControllerEntry, ...] = (ControllerEntry(id="crw"),)
    sweeps: SweepsSection = Field(default_factory=SweepsSection)
    metrics: MetricsSection = Field(default_factory=MetricsSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="before")
    @classmethod
    def _unpack_scenario(cls, data):
        """Lift ``scenario.preset`` and ``scenario.perturbations`` and apply the preset."""
        if not isinstance(data, dict):
            return data
        scenario = data.get("scenario") or {}
        if not isinstance(scenario, dict) or not ({"preset", "perturbations"} & set(scenario)):
            return data
        data = dict(data)
        scenario = dict(scenario)
        preset_name = scenario.pop("preset", None)
        perturbations = scenario.pop("perturbations", None) or {}
        if preset_name is not None:
            if preset_name not in PRESETS:
                raise ValueError(f"unknown preset {preset_name!r} (known: {', '.join(sorted(PRESETS))})")
            preset = PRESETS[preset_name]
            scenario = deep_merge(preset.get("scenario", {}), scenario)
            perturbations = deep_merge(preset.get("perturbations", {}), perturbations)
        data["scenario"] = scenario
        data["perturbations"] = perturbations
        if preset_name is not None:
            data["preset"] = preset_name
        return data

    @field_validator("controllers", mode="before")
    @classmethod
    def _controller_ids(cls, v):
        if isinstance(v, (str, dict)):
            v = [v]
        return [{"id": c} if isinstance(c, str) else c for c in v]

    @property
    def controller_ids(self) -> Tuple[str, ...]:
        return tuple(c.id for c in self.controllers)

    def controller_params(self, controller_id: str) -> Dict[str, Any]:
        for c in self.controllers:
            if c.id == controller_id:
                return dict(c.params)
        return {}

    def to_plan(self) -> ExperimentPlan:
        return ExperimentPlan(
            scenario=self.scenario,
            perturbations=self.perturbations,
            controllers=self.controller_ids,
            controller_params={c.id: dict(c.params) for c in self.controllers if c.params},
            swarm_sizes=self.sweeps.swarm_sizes,
            sweeps=self.sweeps.axes,
            n_runs=self.sweeps.n_runs,
            base_seed=self.sweeps.base_seed,
            metrics=self.metrics.requested,
            options=self.metrics.options(),
        )

    def effective(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def format_validation_error(error: ValidationError) -> str:
    """One ``dotted.location: message`` line per problem."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "\n".join(lines)


def load_config(path: str) -> ConfigFile:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping, got {type(data).__name__}")
    config = ConfigFile.model_validate(data)
    logger.debug(f"Loaded config {path} (preset={config.preset})")
    return config

import logging

import pytest
from pydantic import ValidationError

from src.errors import PlanError
from src.models.profiles import NoiseProfile, Perturbations, QueueRates, VarianceProfile, Waveform, WaveKind
from src.workers.planner import (
    ExperimentPlan,
    MetricName,
    SweepAxis,
    SweepAxisKind,
    apply_axis,
    expand,
    ideal_perturbations,
    plan_hash,
    run_seed,
    value_key,
)


def noise_sweep(*values):
    return SweepAxis(axis=SweepAxisKind.NOISE_SIGMA, values=values)


def test_product_count():
    plan = ExperimentPlan(
        controllers=("crw", "dpo"),
        swarm_sizes=(1, 4, 16),
        sweeps=(noise_sweep(0.0, 0.01, 0.02, 0.03),),
        n_runs=5,
    )
    specs = expand(plan)
    baseline = [s for s in specs if s.baseline]
    assert len(specs) - len(baseline) == 120
    assert len(baseline) == 30


def test_empty_sweeps_give_baseline_only():
    specs = expand(ExperimentPlan(swarm_sizes=(1, 2), n_runs=3))
    assert len(specs) == 6
    assert all(s.baseline for s in specs)


def test_duplicate_values_are_dropped_with_warning(caplog):
    plan = ExperimentPlan(swarm_sizes=(1,), sweeps=(noise_sweep(0.01, 0.01, 0.02),), n_runs=2)
    with caplog.at_level(logging.WARNING):
        specs = expand(plan)
    assert sorted({s.x for s in specs if not s.baseline}) == ["0.01", "0.02"]
    assert "duplicate" in caplog.text


def test_selforg_needs_unit_swarm():
    with pytest.raises(PlanError):
        expand(ExperimentPlan(swarm_sizes=(4, 16), n_runs=2))
    plan = ExperimentPlan(swarm_sizes=(4, 16), n_runs=2, metrics=(MetricName.SCALABILITY,))
    assert len(expand(plan)) == 4


def test_plan_validation():
    with pytest.raises(ValidationError):
        ExperimentPlan(controllers=("crw", "crw"))
    with pytest.raises(ValidationError):
        ExperimentPlan(controllers=("aco",))
    with pytest.raises(ValidationError):
        ExperimentPlan(swarm_sizes=(4, 2))
    with pytest.raises(ValidationError):
        ExperimentPlan(n_runs=1)
    with pytest.raises(ValidationError):
        ExperimentPlan(sweeps=(noise_sweep(0.1), noise_sweep(0.2)))
    with pytest.raises(ValidationError):
        SweepAxis(axis=SweepAxisKind.POPULATION_RATES, values=(0.1,))
    with pytest.raises(ValidationError):
        SweepAxis(axis=SweepAxisKind.NOISE_SIGMA, values=(-0.1,))


def test_seeds_shared_between_baseline_and_sweep_cells():
    plan = ExperimentPlan(swarm_sizes=(1, 4), sweeps=(noise_sweep(0.0, 0.05),), n_runs=3, base_seed=9)
    by_cell = {}
    for spec in expand(plan):
        by_cell.setdefault((spec.swarm_size, spec.run_index), set()).add(spec.seed)
        assert spec.config.seed == spec.seed
        assert spec.seed == run_seed(9, spec.controller, spec.swarm_size, spec.run_index)
    assert all(len(seeds) == 1 for seeds in by_cell.values())
    assert len({next(iter(s)) for s in by_cell.values()}) == len(by_cell)


def test_canonical_order():
    plan = ExperimentPlan(controllers=("crw", "dpo"), swarm_sizes=(1, 2), sweeps=(noise_sweep(0.1),), n_runs=2)
    labels = [(s.controller, s.swarm_size, s.x, s.run_index) for s in expand(plan)]
    assert labels[:4] == [("crw", 1, None, 0), ("crw", 1, None, 1), ("crw", 1, "0.1", 0), ("crw", 1, "0.1", 1)]
    assert labels[-1] == ("dpo", 2, "0.1", 1)


def test_plan_hash_is_stable():
    plan = ExperimentPlan(sweeps=(noise_sweep(0.1),))
    same = ExperimentPlan.model_validate(plan.model_dump(mode="json"))
    assert plan_hash(plan) == plan_hash(same)
    assert plan_hash(plan) != plan_hash(plan.model_copy(update={"base_seed": 1}))


def test_ideal_perturbations_keep_shapes_only():
    shape = Perturbations(
        noise=NoiseProfile(sigma=0.3),
        variance=VarianceProfile(deviation=Waveform(kind=WaveKind.SINE, amplitude=0.5, period=800)),
    )
    ideal = ideal_perturbations(shape)
    assert ideal.noise.sigma == 0.0
    assert ideal.variance.deviation.kind is WaveKind.SINE
    assert ideal.variance.deviation.period == 800
    assert ideal.variance.is_flat
    assert ideal.condition_tag() == "ideal"


def test_apply_axis_sets_one_magnitude():
    shape = Perturbations(variance=VarianceProfile(deviation=Waveform(kind=WaveKind.SQUARE, period=500)))
    plan = ExperimentPlan()
    _, throttled = apply_axis(plan.scenario, shape, SweepAxisKind.THROTTLE_AMPLITUDE, 0.4)
    assert throttled.variance.deviation.amplitude == 0.4
    assert throttled.variance.deviation.period == 500
    assert throttled.noise.sigma == 0.0

    rates = QueueRates(lambda_d=0.001, mu_b=0.002)
    _, dynamic = apply_axis(plan.scenario, shape, SweepAxisKind.POPULATION_RATES, rates)
    assert dynamic.population.rates == rates
    assert dynamic.variance.is_flat

    config, untouched = apply_axis(plan.scenario, shape, SweepAxisKind.P_RW, 0.02)
    assert config.p_rw == 0.02
    assert untouched == ideal_perturbations(shape)


def test_value_key():
    assert value_key(0.0) == "0"
    assert value_key(0.05) == "0.05"
    assert value_key(QueueRates(lambda_d=0.001, mu_bd=0.003)) == "0.001/0/0/0.003"

"""
Batch execution and the metric suite, on small plans that simulate in seconds
and on hand-built bundles where exact values are known.
"""

import os

import pytest

from src.core.evaluation import (
    REPORT_COLUMNS,
    MetricReport,
    MetricRow,
    compute_suite,
    merge_reports,
    plot_tables,
    write_report,
)
from src.errors import PlanError
from src.models.profiles import QueueRates
from src.models.scenario import Nest, WorldConfig
from src.workers.planner import ExperimentPlan, MetricName, SweepAxis, SweepAxisKind, expand
from src.workers.runner import execute, run_spec

SCENARIO = WorldConfig(
    arena_w=8.0,
    arena_h=8.0,
    nest=Nest(center_x=0.15, center_y=0.5, width=2.0, height=2.0),
    n_blocks=10,
    duration=600,
    interval_len=200,
)


def small_plan(**overrides):
    data = dict(
        scenario=SCENARIO,
        swarm_sizes=(1, 2, 4),
        sweeps=(SweepAxis(axis=SweepAxisKind.NOISE_SIGMA, values=(0.0, 0.05)),),
        n_runs=2,
    )
    data.update(overrides)
    return ExperimentPlan(**data)


# ---------------------------------------------------------------- execution


def test_parallelism_does_not_change_the_report():
    plan = small_plan()
    specs = expand(plan)
    serial = execute(specs, parallelism=1)
    parallel = execute(specs, parallelism=2)
    assert serial.ok and parallel.ok
    a = compute_suite(serial.succeeded(), plan, "h")
    b = compute_suite(parallel.succeeded(), plan, "h")
    assert a.digest() == b.digest()


def test_failing_run_is_recorded_and_others_complete():
    plan = small_plan(sweeps=())
    specs = expand(plan)
    broken = specs[1].model_copy(
        update={"config": SCENARIO.model_copy(update={"n_blocks": 100_000, "n_robots": 1})}
    )
    specs = [specs[0], broken, specs[2]]
    batch = execute(specs, parallelism=1)
    assert not batch.ok
    assert [f.index for f in batch.failures] == [1]
    assert "PlacementError" in batch.failures[0].error
    assert batch.failures[0].traceback
    assert batch.bundles[1] is None
    assert len(list(batch.succeeded())) == 2


def _crash_marked_worker(spec):
    if spec.config.n_blocks == 11:
        os._exit(1)
    return run_spec(spec)


def test_dead_worker_does_not_abort_the_batch():
    specs = expand(small_plan(sweeps=()))[:4]
    specs[1] = specs[1].model_copy(update={"config": specs[1].config.model_copy(update={"n_blocks": 11})})
    batch = execute(specs, parallelism=2, target=_crash_marked_worker)
    assert not batch.ok
    failed = [f.index for f in batch.failures]
    assert 1 in failed
    assert failed == sorted(failed)
    assert batch.bundles[1] is None
    for index in range(len(specs)):
        assert (batch.bundles[index] is not None) != (index in failed)


def test_zero_noise_cell_reproduces_baseline():
    plan = small_plan()
    batch = execute(expand(plan), parallelism=1)
    report = compute_suite(batch.succeeded(), plan)
    for n in (1, 2, 4):
        row = report.get(MetricName.SA_ROBUSTNESS, "crw", str(n), "noise_sigma", "0")
        assert row.value == 0.0
        assert row.n_runs == 2


# ---------------------------------------------------------------- suite on known curves


@pytest.fixture
def linear_results(make_bundle):
    """Performance exactly proportional to N; the noisy cell loses half of its last interval."""
    plan = small_plan()
    results = []
    for spec in expand(plan):
        n = spec.swarm_size
        perf = [float(n)] * 3
        if spec.x == "0.05":
            perf[-1] = n / 2
        results.append((spec, make_bundle(perf, swarm_size=n, seed=spec.seed)))
    return plan, results


def test_suite_values_on_linear_curves(linear_results):
    plan, results = linear_results
    report = compute_suite(results, plan, "abc")
    assert report.get(MetricName.TASK_SELFORG, "crw", "2-4").value == pytest.approx(0.0, abs=1e-9)
    assert report.get(MetricName.SCALABILITY, "crw", "2-4").value == pytest.approx(3.0)
    assert report.get(MetricName.SPATIAL_SELFORG, "crw", "2-4").value == pytest.approx(0.0, abs=1e-9)
    sa = report.get(MetricName.SA_ROBUSTNESS, "crw", "4", "noise_sigma", "0.05")
    assert sa.value == pytest.approx(2.0)
    assert sa.ci_half_width == 0.0
    assert report.plan_hashes == ("abc",)


def test_pairs_skip_the_unit_size(linear_results):
    plan, results = linear_results
    report = compute_suite(results, plan)
    assert {r.swarm_size for r in report.select(MetricName.SCALABILITY)} == {"2-4"}


def test_unswept_metrics_are_marked_inapplicable(linear_results):
    plan, results = linear_results
    report = compute_suite(results, plan)
    row = report.get(MetricName.REACTIVITY, "crw", "")
    assert row.value is None
    assert "throttle_amplitude" in row.reason
    assert "population_rates" in report.get(MetricName.AVAILABILITY, "crw", "").reason
    assert "population_rates" in report.get(MetricName.TASKED_AVAILABILITY, "crw", "").reason


def test_population_sweep_rows(make_bundle):
    rates = QueueRates(lambda_bd=0.001, mu_bd=0.003)
    plan = small_plan(
        scenario=SCENARIO.model_copy(update={"duration": 3000, "interval_len": 1000}),
        swarm_sizes=(1, 2),
        sweeps=(SweepAxis(axis=SweepAxisKind.POPULATION_RATES, values=(rates,)),),
        metrics=(MetricName.PD_ROBUSTNESS, MetricName.AVAILABILITY, MetricName.TASKED_AVAILABILITY),
    )
    results = [(s, make_bundle([1.0, 1.0, 1.0], swarm_size=s.swarm_size, interval_len=1000)) for s in expand(plan)]
    report = compute_suite(results, plan)
    x = "0/0.001/0/0.003"
    availability = report.get(MetricName.AVAILABILITY, "crw", "2", "population_rates", x)
    # rho = 1/3, N = 2, N_min = 1: P(at least one robot outside S) = (1/3 + 1/9) / (1 + 1/3 + 1/9)
    assert availability.value == pytest.approx((1 / 3 + 1 / 9) / (13 / 9))
    assert availability.n_runs == 0
    tasked = report.get(MetricName.TASKED_AVAILABILITY, "crw", "2", "population_rates", x)
    # P(at least one robot tasked) = (1 + 1/3) / (1 + 1/3 + 1/9)
    assert tasked.value == pytest.approx(12 / 13)
    assert tasked.n_runs == 0
    pd_row = report.get(MetricName.PD_ROBUSTNESS, "crw", "2", "population_rates", x)
    # T_S-bar = 1/(mu - lambda) + 1/mu over a 3000-step run.
    weight = (3000 - (1 / 0.002 + 1 / 0.003)) / 3000
    assert pd_row.value == pytest.approx(3.0 - 3.0 * weight)


def test_missing_baseline_is_inapplicable(linear_results):
    plan, results = linear_results
    perturbed_only = [(s, b) for s, b in results if not s.baseline]
    report = compute_suite(perturbed_only, plan)
    row = report.get(MetricName.SA_ROBUSTNESS, "crw", "2", "noise_sigma", "0.05")
    assert row.value is None
    assert "baseline" in row.reason


def test_report_files(tmp_path, linear_results):
    plan, results = linear_results
    report = compute_suite(results, plan)
    paths = write_report(report, str(tmp_path))
    header = (tmp_path / "report.csv").read_text().splitlines()[0]
    assert header == ",".join(REPORT_COLUMNS)
    names = {p.rsplit("/", 1)[-1] for p in paths}
    assert "plot_scalability.csv" in names
    assert "plot_sa_robustness_N4.csv" in names


def test_plot_tables_use_sweep_values_as_x(linear_results):
    plan, results = linear_results
    tables = plot_tables(compute_suite(results, plan))
    sa = tables["plot_sa_robustness_N2"]
    assert sa["x"].tolist() == ["0", "0.05"]
    assert tables["plot_task_selforg"]["x"].tolist() == ["2-4"]
    assert tables["plot_task_selforg"]["axis"].tolist() == ["swarm_size"]


# ---------------------------------------------------------------- merging


def _row(controller, value, metric=MetricName.TASK_SELFORG, size="2-4"):
    return MetricRow(controller=controller, swarm_size=size, metric=metric, value=value, n_runs=2)


def test_merge_disjoint_reports():
    a = MetricReport(rows=(_row("crw", 1.0),), plan_hashes=("a",), seeds=(1, 2))
    b = MetricReport(rows=(_row("dpo", 2.0),), plan_hashes=("b",), seeds=(2, 3))
    merged = merge_reports(a, b)
    assert [r.controller for r in merged.rows] == ["crw", "dpo"]
    assert merged.plan_hashes == ("a", "b")
    assert merged.seeds == (1, 2, 3)


def test_merge_drops_placeholders_the_other_half_covers():
    placeholder = MetricRow(controller="crw", swarm_size="", metric=MetricName.TASK_SELFORG, reason="no successful runs")
    merged = merge_reports(MetricReport(rows=(placeholder,)), MetricReport(rows=(_row("crw", 1.0),)))
    assert merged.rows == (_row("crw", 1.0),)


def test_merge_conflict():
    with pytest.raises(PlanError):
        merge_reports(MetricReport(rows=(_row("crw", 1.0),)), MetricReport(rows=(_row("crw", 1.5),)))

"""
Metric suite over a finished batch.

Every perturbed run is compared with the baseline run that shares its seed
(same controller, size and run index), and size pairs are formed run by run,
so each metric gets one value per run; the report keeps their mean and a
normal-approximation 95% half-width.
"""

import hashlib
import logging
import math
import os
import re
from collections import defaultdict
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.core.flexibility import FlexibilityInput, adaptability, reactivity
from src.core.robustness import (
    RobustnessInput,
    availability,
    pd_robustness,
    sa_robustness,
    tasked_availability,
    utilization,
)
from src.core.scalability import ScalabilityInput, karp_flatt_scalability
from src.core.selforg import SelfOrgInput, spatial_selforg, task_selforg
from src.errors import PlanError
from src.models.curves import CI_Z, CurveBundle
from src.models.storage import write_frame
from src.workers.planner import (
    AXIS_METRICS,
    PAIR_METRICS,
    QUEUE_METRICS,
    ExperimentPlan,
    MetricName,
    RunSpec,
    SweepAxisKind,
)

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "controller",
    "swarm_size",
    "axis",
    "x",
    "metric",
    "value",
    "ci_half_width",
    "n_runs",
    "reason",
]
PLOT_COLUMNS = ["controller", "axis", "x", "metric", "value", "ci_half_width", "n_runs"]

Cell = Tuple[str, int, str, str]  # controller, swarm size, axis, x


class MetricRow(BaseModel):
    """One metric for one cell; ``value`` is None when inapplicable and ``reason`` says why."""

    model_config = ConfigDict(frozen=True)

    controller: str
    swarm_size: str  # "N" for cell metrics, "N1-N2" for size-pair metrics
    axis: str = ""
    x: str = ""
    metric: MetricName
    value: Optional[float] = None
    ci_half_width: Optional[float] = None
    n_runs: int = 0
    reason: str = ""

    @property
    def key(self) -> Tuple[str, str, str, str, str]:
        return (self.controller, self.metric.value, self.axis, self.swarm_size, self.x)

    @property
    def applicable(self) -> bool:
        return self.value is not None


class MetricReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: Tuple[MetricRow, ...] = ()
    plan_hashes: Tuple[str, ...] = ()
    seeds: Tuple[int, ...] = ()
    failures: Tuple[str, ...] = Field((), description="Labels of runs that raised")

    def get(self, metric: MetricName, controller: str, swarm_size: str, axis: str = "", x: str = "") -> MetricRow:
        key = (controller, MetricName(metric).value, axis, str(swarm_size), x)
        for row in self.rows:
            if row.key == key:
                return row
        raise KeyError(key)

    def select(self, metric: MetricName) -> List[MetricRow]:
        return [r for r in self.rows if r.metric is MetricName(metric)]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                [
                    r.controller,
                    r.swarm_size,
                    r.axis,
                    r.x,
                    r.metric.value,
                    _fmt(r.value),
                    _fmt(r.ci_half_width),
                    str(r.n_runs),
                    r.reason,
                ]
                for r in self.rows
            ],
            columns=REPORT_COLUMNS,
        )

    def to_csv(self) -> str:
        return self.frame().to_csv(index=False, lineterminator="\n")

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _natural(text: str):
    key = []
    for part in re.split(r"/|(?<=\d)-(?=\d)", text):
        try:
            key.append((0, float(part), ""))
        except ValueError:
            key.append((1, 0.0, part))
    return tuple(key)


def _row_order(row: MetricRow):
    return (row.controller, row.metric.value, row.axis, _natural(row.swarm_size), _natural(row.x))


def _summarize(values: Sequence[float]) -> Tuple[float, Optional[float]]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    return mean, float(CI_Z * arr.std(ddof=1) / math.sqrt(arr.size))


def _per_run(
    metric: MetricName,
    base: dict,
    compute: Callable[[int], float],
    runs: Iterable[int],
    **where,
) -> MetricRow:
    runs = sorted(runs)
    if not runs:
        return MetricRow(metric=metric, reason="no runs with matching baseline", **base, **where)
    try:
        values = [compute(i) for i in runs]
    except ValueError as e:
        logger.warning(f"{metric.value} inapplicable for {base} {where}: {e}")
        return MetricRow(metric=metric, reason=str(e), **base, **where)
    mean, ci = _summarize(values)
    return MetricRow(metric=metric, value=mean, ci_half_width=ci, n_runs=len(runs), **base, **where)


class _Index:
    """Successful runs grouped by cell, keyed by run index."""

    def __init__(self, results: Iterable[Tuple[RunSpec, CurveBundle]]):
        self.cells: Dict[Cell, Dict[int, CurveBundle]] = defaultdict(dict)
        self.specs: Dict[Cell, RunSpec] = {}
        self.seeds = set()
        for spec, bundle in results:
            self.cells[spec.cell][spec.run_index] = bundle
            self.specs.setdefault(spec.cell, spec)
            self.seeds.add(spec.seed)

    def runs(self, cell: Cell) -> Dict[int, CurveBundle]:
        return self.cells.get(cell, {})


def _pair_rows(plan: ExperimentPlan, index: _Index, controller: str, axis: str, x: str) -> List[MetricRow]:
    rows: List[MetricRow] = []
    sizes = [n for n in plan.swarm_sizes if n > 1]
    pairs = list(zip(sizes, sizes[1:]))
    wanted = [m for m in PAIR_METRICS if plan.wants(m)]
    if not wanted:
        return rows
    if not pairs:
        for m in wanted:
            rows.append(
                MetricRow(
                    controller=controller, swarm_size="", axis=axis, x=x, metric=m,
                    reason="needs at least two swarm sizes above 1",
                )
            )
        return rows

    opts = plan.options
    unit = index.runs((controller, 1, axis, x))
    for n1, n2 in pairs:
        a = index.runs((controller, n1, axis, x))
        b = index.runs((controller, n2, axis, x))
        both = set(a) & set(b)
        base = dict(controller=controller, swarm_size=f"{n1}-{n2}")

        for metric in wanted:
            if metric is MetricName.SPATIAL_SELFORG:
                if not unit:
                    rows.append(MetricRow(metric=metric, reason="missing N=1 baseline", axis=axis, x=x, **base))
                    continue
                rows.append(
                    _per_run(
                        metric, base,
                        lambda i: spatial_selforg(
                            SelfOrgInput(
                                perf_1=unit[i].performance, intf_1=unit[i].interference,
                                perf_n1=a[i].performance, intf_n1=a[i].interference,
                                perf_n2=b[i].performance, intf_n2=b[i].interference,
                            )
                        ),
                        both & set(unit), axis=axis, x=x,
                    )
                )
            elif metric is MetricName.TASK_SELFORG:
                rows.append(
                    _per_run(
                        metric, base,
                        lambda i: task_selforg(a[i].performance, b[i].performance),
                        both, axis=axis, x=x,
                    )
                )
            else:
                rows.append(
                    _per_run(
                        metric, base,
                        lambda i: karp_flatt_scalability(
                            ScalabilityInput(
                                perf_n1=a[i].performance, perf_n2=b[i].performance,
                                zero_policy=opts.zero_policy, literal=opts.literal_scalability,
                            )
                        ),
                        both, axis=axis, x=x,
                    )
                )
    return rows


def _cell_rows(plan: ExperimentPlan, index: _Index, cell: Cell) -> List[MetricRow]:
    controller, n, axis_value, x = cell
    axis = SweepAxisKind(axis_value)
    spec = index.specs[cell]
    actual = index.runs(cell)
    ideal = index.runs((controller, n, "", ""))
    shared = set(actual) & set(ideal)
    base = dict(controller=controller, swarm_size=str(n))
    opts = plan.options
    dtw_cfg = opts.dtw_config()
    rows: List[MetricRow] = []

    for metric in AXIS_METRICS[axis]:
        if not plan.wants(metric):
            continue
        if metric in QUEUE_METRICS:
            rows.append(_availability_row(plan, spec, metric, base, axis_value, x))
            continue
        if not ideal:
            rows.append(MetricRow(metric=metric, reason="missing baseline", axis=axis_value, x=x, **base))
            continue
        if metric is MetricName.SA_ROBUSTNESS:
            compute = lambda i: sa_robustness(ideal[i].performance, actual[i].performance, dtw_cfg)  # noqa: E731
        elif metric is MetricName.REACTIVITY:
            compute = lambda i: reactivity(  # noqa: E731
                FlexibilityInput(
                    perf_ideal=ideal[i].performance, perf_actual=actual[i].performance,
                    profile=spec.perturbations.variance, dtw_cfg=dtw_cfg, literal=opts.literal_reactivity,
                )
            )
        elif metric is MetricName.ADAPTABILITY:
            compute = lambda i: adaptability(  # noqa: E731
                FlexibilityInput(
                    perf_ideal=ideal[i].performance, perf_actual=actual[i].performance,
                    profile=spec.perturbations.variance, dtw_cfg=dtw_cfg,
                )
            )
        else:
            compute = lambda i: pd_robustness(  # noqa: E731
                RobustnessInput(
                    perf_ideal=ideal[i].performance, perf_actual=actual[i].performance,
                    rates=spec.perturbations.population.rates, total_time=spec.config.duration,
                )
            )
        rows.append(_per_run(metric, base, compute, shared, axis=axis_value, x=x))
    return rows


def _availability_row(
    plan: ExperimentPlan, spec: RunSpec, metric: MetricName, base: dict, axis: str, x: str
) -> MetricRow:
    """Closed-form queue value for the cell rates; no runs are involved."""
    rates = spec.perturbations.population.rates
    n = spec.swarm_size
    n_min = max(1, math.ceil(plan.options.availability_fraction * n))
    where = dict(axis=axis, x=x, metric=metric, **base)
    formula = availability if metric is MetricName.AVAILABILITY else tasked_availability
    try:
        rho = utilization(rates)
        return MetricRow(value=formula(rho, n, n_min), ci_half_width=0.0, **where)
    except ValueError as e:
        return MetricRow(reason=str(e), **where)


def _coverage_rows(plan: ExperimentPlan, rows: List[MetricRow]) -> List[MetricRow]:
    """A row for every requested metric that no cell produced."""
    present = {(r.controller, r.metric) for r in rows}
    swept = {s.axis for s in plan.sweeps}
    extra = []
    for controller in plan.controllers:
        for metric in plan.metrics:
            if (controller, metric) in present:
                continue
            feeders = [a.value for a, ms in AXIS_METRICS.items() if metric in ms and a is not SweepAxisKind.P_RW]
            if feeders and not swept & {SweepAxisKind(a) for a in feeders}:
                reason = f"no {' or '.join(feeders)} sweep in plan"
            else:
                reason = "no successful runs"
            extra.append(MetricRow(controller=controller, swarm_size="", metric=metric, reason=reason))
    return extra


def compute_suite(
    results: Iterable[Tuple[RunSpec, CurveBundle]],
    plan: ExperimentPlan,
    plan_hash: str = "",
    failures: Sequence[str] = (),
) -> MetricReport:
    """Compute every requested metric from (spec, bundle) pairs of one plan."""
    index = _Index(results)
    rows: List[MetricRow] = []

    p_rw_cells = sorted({(c[2], c[3]) for c in index.cells if c[2] == SweepAxisKind.P_RW.value})
    for controller in plan.controllers:
        rows.extend(_pair_rows(plan, index, controller, "", ""))
        for axis, x in p_rw_cells:
            rows.extend(_pair_rows(plan, index, controller, axis, x))

    for cell in sorted(index.cells):
        if cell[2] and cell[2] != SweepAxisKind.P_RW.value:
            rows.extend(_cell_rows(plan, index, cell))

    rows.extend(_coverage_rows(plan, rows))
    rows.sort(key=_row_order)
    applicable = sum(1 for r in rows if r.applicable)
    logger.info(f"Computed {len(rows)} metric rows ({applicable} applicable)")
    return MetricReport(
        rows=tuple(rows),
        plan_hashes=(plan_hash,) if plan_hash else (),
        seeds=tuple(sorted(index.seeds)),
        failures=tuple(failures),
    )


def merge_reports(a: MetricReport, b: MetricReport) -> MetricReport:
    """Union of two reports over disjoint cells."""
    merged: Dict[tuple, MetricRow] = {r.key: r for r in a.rows}
    for row in b.rows:
        other = merged.get(row.key)
        if other is not None and other != row:
            raise PlanError(f"reports disagree on {row.metric.value} for cell {row.key}")
        merged[row.key] = row
    # Placeholder rows for a metric one half could not cover are dropped once the other half covers it.
    covered = {(r.controller, r.metric) for r in merged.values() if r.swarm_size}
    rows = [r for r in merged.values() if r.swarm_size or (r.controller, r.metric) not in covered]
    rows.sort(key=_row_order)
    return MetricReport(
        rows=tuple(rows),
        plan_hashes=tuple(sorted(set(a.plan_hashes) | set(b.plan_hashes))),
        seeds=tuple(sorted(set(a.seeds) | set(b.seeds))),
        failures=tuple(sorted(set(a.failures) | set(b.failures))),
    )


def plot_tables(report: MetricReport) -> Dict[str, pd.DataFrame]:
    """Plot-ready frames keyed by file stem.

    Size-pair metrics of the baseline go to ``plot_<metric>`` with X = "N1-N2";
    swept metrics go to ``plot_<metric>_N<size>`` with X = sweep value.
    """
    groups: Dict[str, List[MetricRow]] = defaultdict(list)
    for row in report.rows:
        if not row.applicable:
            continue
        if row.axis:
            groups[f"plot_{row.metric.value}_N{row.swarm_size}"].append(row)
        else:
            groups[f"plot_{row.metric.value}"].append(row)

    tables = {}
    for stem, rows in sorted(groups.items()):
        tables[stem] = pd.DataFrame(
            [
                [
                    r.controller,
                    r.axis or "swarm_size",
                    r.x if r.axis else r.swarm_size,
                    r.metric.value,
                    _fmt(r.value),
                    _fmt(r.ci_half_width),
                    str(r.n_runs),
                ]
                for r in rows
            ],
            columns=PLOT_COLUMNS,
        )
    return tables


def write_report(report: MetricReport, out_dir: str) -> List[str]:
    """Write report.csv and the plot tables; returns the written paths."""
    paths = [os.path.join(out_dir, "report.csv")]
    write_frame(paths[0], report.frame())
    for stem, frame in plot_tables(report).items():
        path = os.path.join(out_dir, f"{stem}.csv")
        write_frame(path, frame)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} report files to {out_dir}")
    return paths

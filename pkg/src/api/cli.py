"""
Command-line interface.

    swarmperf sim CONFIG [--seed S] [--n N] [--controller ID] [--out PATH]
    swarmperf metrics METRIC [METRIC ...] --files FIRST SECOND [--baseline FILE] ...
    swarmperf availability (--rho R | --lambda-d .. --mu-bd ..) --n N ...
    swarmperf sweep CONFIG [--workers W] [--out DIR] [--reuse]

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

import argparse
import logging
import math
import os
import sys
from datetime import datetime, timezone
from typing import List, Optional, Sequence

import pandas as pd
import yaml
from pydantic import ValidationError

from src import __version__
from src.core.dtw import CostKind, DtwConfig
from src.core.evaluation import compute_suite, write_report
from src.core.flexibility import FlexibilityInput, adaptability, reactivity
from src.core.robustness import (
    RobustnessInput,
    availability,
    max_utilization,
    pd_robustness,
    sa_robustness,
    tasked_availability,
    utilization,
)
from src.core.scalability import ScalabilityInput, ZeroPolicy, karp_flatt_scalability
from src.core.selforg import SelfOrgInput, spatial_selforg, task_selforg
from src.errors import CurveError, UnstableQueueError
from src.models.config import format_validation_error, load_config
from src.models.curves import CurveBundle
from src.models.profiles import QueueRates, VarianceProfile, Waveform, WaveKind
from src.models.storage import read_curves, write_curves, write_frame, write_json
from src.monitoring.resources import host_snapshot
from src.settings import configure_logging, default_workers
from src.sim.world import simulate
from src.workers.planner import QUEUE_METRICS, MetricName, RunSpec, expand, plan_hash
from src.workers.runner import BatchResult, execute

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


# ---------------------------------------------------------------------- sim


def cmd_sim(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    controller = args.controller or config.controller_ids[0]
    world = config.scenario
    if args.n is not None:
        world = world.for_swarm_size(args.n)
    if args.seed is not None:
        world = world.with_seed(args.seed)

    out = args.out or os.path.join(config.output.dir, config.output.curves_name)
    trace = f"{os.path.splitext(out)[0]}.trace.csv" if (args.trace or config.output.trace) else None
    result = simulate(world, controller, config.perturbations, config.controller_params(controller), trace)
    write_curves(result.bundle, out)
    write_json(
        f"{os.path.splitext(out)[0]}.manifest.json",
        {
            "command": "sim",
            "created_at": _now(),
            "version": __version__,
            "controller": controller,
            "seed": world.seed,
            "world": world.model_dump(mode="json"),
            "effective_config": config.effective(),
            "summary": {
                "collected": result.summary.collected,
                "first_pickups": result.summary.first_pickups,
                "avoiding_steps": result.summary.avoiding_steps,
                "active_steps": result.summary.active_steps,
                "mean_discovery_distance": _json_float(result.summary.mean_discovery_distance),
            },
            "host": host_snapshot(),
        },
    )
    print(f"{out}: {len(result.bundle)} intervals, {result.summary.collected} collected")
    return EXIT_OK


def _json_float(x: float) -> Optional[float]:
    return None if math.isnan(x) else x


# ---------------------------------------------------------------------- metrics


def _profile_from(args: argparse.Namespace) -> VarianceProfile:
    return VarianceProfile(
        ideal=args.ideal_level,
        deviation=Waveform(kind=args.wave, amplitude=args.amplitude, period=args.period, phase=args.phase),
    )


def _rates_from(args: argparse.Namespace) -> QueueRates:
    return QueueRates(lambda_d=args.lambda_d, lambda_bd=args.lambda_bd, mu_b=args.mu_b, mu_bd=args.mu_bd)


def compute_metric(metric: MetricName, curves: List[CurveBundle], args: argparse.Namespace) -> float:
    """One metric from curve files; the first file is N1 / ideal, the second N2 / actual."""
    if len(curves) != 2:
        raise CurveError(f"{metric.value} needs exactly two curve files, got {len(curves)}")
    first, second = curves
    dtw_cfg = DtwConfig(cost=args.dtw_cost, window=args.dtw_window)
    if metric is MetricName.SPATIAL_SELFORG:
        if args.baseline is None and first.swarm_size != 1:
            raise CurveError("spatial_selforg needs --baseline with the N=1 curves")
        unit = read_curves(args.baseline) if args.baseline else first
        return spatial_selforg(
            SelfOrgInput(
                perf_1=unit.performance,
                intf_1=unit.interference,
                perf_n1=first.performance,
                intf_n1=first.interference,
                perf_n2=second.performance,
                intf_n2=second.interference,
            )
        )
    if metric is MetricName.TASK_SELFORG:
        return task_selforg(first.performance, second.performance)
    if metric is MetricName.SCALABILITY:
        return karp_flatt_scalability(
            ScalabilityInput(
                perf_n1=first.performance,
                perf_n2=second.performance,
                zero_policy=args.zero_policy,
                literal=args.literal,
            )
        )
    if metric in (MetricName.REACTIVITY, MetricName.ADAPTABILITY):
        data = FlexibilityInput(
            perf_ideal=first.performance,
            perf_actual=second.performance,
            profile=_profile_from(args),
            dtw_cfg=dtw_cfg,
            literal=args.literal,
        )
        return reactivity(data) if metric is MetricName.REACTIVITY else adaptability(data)
    if metric is MetricName.SA_ROBUSTNESS:
        return sa_robustness(first.performance, second.performance, dtw_cfg)
    if metric is MetricName.PD_ROBUSTNESS:
        total = args.total_time or len(first) * first.interval_len
        return pd_robustness(
            RobustnessInput(
                perf_ideal=first.performance,
                perf_actual=second.performance,
                rates=_rates_from(args),
                total_time=total,
            )
        )
    raise CurveError(f"{metric.value} is computed by the availability subcommand")


def cmd_metrics(args: argparse.Namespace) -> int:
    curves = [read_curves(path) for path in args.files]
    metrics = [MetricName(m) for m in args.metric]
    rows = []
    for metric in metrics:
        value = compute_metric(metric, curves, args)
        rows.append({"metric": metric.value, "value": repr(float(value))})
        print(f"{metric.value}={value!r}")
    if args.out:
        write_frame(args.out, pd.DataFrame(rows, columns=["metric", "value"]))
    return EXIT_OK


# ---------------------------------------------------------------------- availability


def cmd_availability(args: argparse.Namespace) -> int:
    n = args.n
    if args.rho is not None:
        rho = args.rho
        mu = args.mu
    else:
        rates = _rates_from(args)
        rho = utilization(rates)
        mu = args.mu if args.mu is not None else rates.service_rate
    if rho >= 1:
        raise UnstableQueueError(f"unstable queue: rho={rho:.6g} >= 1")
    if rho <= 0:
        raise UnstableQueueError(f"availability needs rho > 0, got {rho:.6g}")

    low = args.n_min_low
    high = args.n_min_high if args.n_min_high is not None else n
    if not 1 <= low <= high <= n:
        raise ValueError(f"N_min range must satisfy 1 <= low <= high <= N, got [{low}, {high}] with N={n}")

    rows = []
    for n_min in range(high, low - 1, -1):
        row = {
            "n_min": str(n_min),
            "p_v": repr(availability(rho, n, n_min)),
            "tasked_availability": repr(tasked_availability(rho, n, n_min)),
        }
        if args.target is not None:
            rho_max = max_utilization(n, n_min, args.target)
            row["rho_max"] = repr(rho_max)
            if mu is not None:
                row["lambda_max"] = repr(rho_max * mu)
        rows.append(row)

    frame = pd.DataFrame(rows)
    print(f"# rho={rho!r} N={n}")
    print(frame.to_string(index=False))
    if args.out:
        write_frame(args.out, frame)
    return EXIT_OK


# ---------------------------------------------------------------------- sweep


def _bundle_path(out_dir: str, spec: RunSpec) -> str:
    where = f"{spec.axis.value}_{spec.x.replace('/', '_')}" if spec.axis else "baseline"
    return os.path.join(out_dir, "bundles", f"{spec.controller}_N{spec.swarm_size}_{where}_r{spec.run_index}.csv")


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    plan = config.to_plan()
    specs = expand(plan)
    digest = plan_hash(plan)
    out_dir = args.out or config.output.dir
    archive = config.output.archive_bundles

    bundles: List[Optional[CurveBundle]] = [None] * len(specs)
    pending = []
    for i, spec in enumerate(specs):
        path = _bundle_path(out_dir, spec)
        if args.reuse and os.path.exists(path):
            bundles[i] = read_curves(path)
        else:
            pending.append(i)
    if args.reuse:
        logger.info(f"Reusing {len(specs) - len(pending)} archived runs")

    batch = execute([specs[i] for i in pending], args.workers or default_workers())
    for local, i in enumerate(pending):
        bundles[i] = batch.bundles[local]
        if archive and bundles[i] is not None:
            write_curves(bundles[i], _bundle_path(out_dir, specs[i]))
    failures = [f.model_copy(update={"index": pending[f.index]}) for f in batch.failures]
    result = BatchResult(specs=specs, bundles=bundles, failures=failures)

    report = compute_suite(result.succeeded(), plan, digest, [f.label for f in result.failures])
    paths = write_report(report, out_dir)
    write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "command": "sweep",
            "created_at": _now(),
            "version": __version__,
            "plan_hash": digest,
            "report_sha256": report.digest(),
            "n_runs_total": len(specs),
            "seeds": sorted({s.seed for s in specs}),
            "failures": [f.model_dump() for f in result.failures],
            "effective_config": config.effective(),
            "files": [os.path.relpath(p, out_dir) for p in paths],
            "host": host_snapshot(),
        },
    )
    print(f"{out_dir}: {len(report.rows)} metric rows, report sha256 {report.digest()[:16]}")
    if result.failures:
        print(f"{len(result.failures)} run(s) failed; see manifest.json", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------- parser


def _add_rate_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda-d", type=float, default=0.0, help="Permanent removal rate")
    parser.add_argument("--lambda-bd", type=float, default=0.0, help="Temporary removal rate")
    parser.add_argument("--mu-b", type=float, default=0.0, help="Addition rate")
    parser.add_argument("--mu-bd", type=float, default=0.0, help="Return rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmperf", description="Swarm performance metrics and foraging simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Overrides SWARMPERF_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="Run one scenario cell and write its curves")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="Swarm size")
    p.add_argument("--controller")
    p.add_argument("--out", help="Curve CSV path")
    p.add_argument("--trace", action="store_true", help="Also write a per-step robot trace")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("metrics", help="Compute metrics from curve files")
    p.add_argument("metric", nargs="+", choices=[m.value for m in MetricName if m not in QUEUE_METRICS])
    p.add_argument("--files", nargs=2, required=True, metavar=("FIRST", "SECOND"),
                   help="N1 and N2 curves, or ideal and actual curves")
    p.add_argument("--baseline", help="N=1 curves for spatial_selforg")
    p.add_argument("--dtw-cost", type=CostKind, default=CostKind.ABSOLUTE, choices=list(CostKind))
    p.add_argument("--dtw-window", type=int)
    p.add_argument("--zero-policy", type=ZeroPolicy, default=ZeroPolicy.SKIP, choices=list(ZeroPolicy))
    p.add_argument("--literal", action="store_true", help="Use the unadjusted published forms")
    p.add_argument("--wave", type=WaveKind, default=WaveKind.CONSTANT, choices=list(WaveKind))
    p.add_argument("--amplitude", type=float, default=0.0)
    p.add_argument("--period", type=int, default=5000)
    p.add_argument("--phase", type=int, default=0)
    p.add_argument("--ideal-level", type=float, default=1.0)
    p.add_argument("--total-time", type=int)
    _add_rate_flags(p)
    p.add_argument("--out", help="Write the values as CSV")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("availability", help="Swarm availability table over N_min")
    p.add_argument("--rho", type=float)
    _add_rate_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--n-min-low", type=int, default=1)
    p.add_argument("--n-min-high", type=int)
    p.add_argument("--target", type=float, help="Also report the largest rho keeping tasked availability >= target")
    p.add_argument("--mu", type=float, help="Service rate used to turn rho_max into lambda_max")
    p.add_argument("--out")
    p.set_defaults(func=cmd_availability)

    p = sub.add_parser("sweep", help="Expand, run and evaluate an experiment plan")
    p.add_argument("config")
    p.add_argument("--workers", type=int, help="Overrides SWARMPERF_WORKERS")
    p.add_argument("--out", help="Output directory")
    p.add_argument("--reuse", action="store_true", help="Read archived bundles instead of re-running them")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(args.log_level)

    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as e:
        print(f"error: invalid input\n{format_validation_error(e)}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, yaml.YAMLError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME

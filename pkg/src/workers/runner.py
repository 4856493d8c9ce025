"""
Batch execution of run specs.

Runs are independent and deterministic by seed, so results do not depend on
worker count or completion order. A run that raises is recorded as a
RunFailure and the batch carries on.
"""

import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict

from src.models.curves import CurveBundle
from src.settings import default_workers
from src.sim.world import run
from src.workers.planner import RunSpec

logger = logging.getLogger(__name__)


class RunFailure(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    label: str
    error: str
    traceback: str


@dataclass
class BatchResult:
    specs: List[RunSpec]
    bundles: List[Optional[CurveBundle]]
    failures: List[RunFailure] = field(default_factory=list)

    def succeeded(self) -> Iterator[Tuple[RunSpec, CurveBundle]]:
        for spec, bundle in zip(self.specs, self.bundles):
            if bundle is not None:
                yield spec, bundle

    @property
    def ok(self) -> bool:
        return not self.failures


def run_spec(spec: RunSpec) -> CurveBundle:
    return run(spec.config, spec.controller, spec.perturbations, spec.controller_params or None)


def _failure(index: int, spec: RunSpec, error: BaseException) -> RunFailure:
    return RunFailure(
        index=index,
        label=spec.label,
        error=f"{type(error).__name__}: {error}",
        traceback="".join(traceback.format_exception(type(error), error, error.__traceback__)),
    )


def _run_safely(
    index: int, spec: RunSpec, target: Callable[[RunSpec], CurveBundle] = run_spec
) -> Tuple[int, Optional[CurveBundle], Optional[RunFailure]]:
    try:
        return index, target(spec), None
    except Exception as e:
        return index, None, _failure(index, spec, e)


def execute(
    specs: Sequence[RunSpec],
    parallelism: Optional[int] = None,
    target: Callable[[RunSpec], CurveBundle] = run_spec,
) -> BatchResult:
    """Run every spec; ``parallelism`` defaults to the configured worker count.

    ``target`` must be a module-level function so worker processes can import it.
    A worker that dies takes the pool down with it: the runs still pending are
    recorded as failures and the batch returns normally.
    """
    specs = list(specs)
    workers = parallelism or default_workers()
    bundles: List[Optional[CurveBundle]] = [None] * len(specs)
    failures: List[RunFailure] = []
    total = len(specs)
    start = time.monotonic()

    def record(done: int, index: int, bundle: Optional[CurveBundle], failure: Optional[RunFailure]) -> None:
        if failure is not None:
            failures.append(failure)
            logger.error(f"run {done}/{total} failed: {failure.label}: {failure.error}")
            logger.error(f"Traceback: {failure.traceback}")
        else:
            bundles[index] = bundle
            logger.info(f"run {done}/{total} {specs[index].label} ({time.monotonic() - start:.1f}s)")

    if workers <= 1 or total <= 1:
        for done, (index, spec) in enumerate(enumerate(specs), start=1):
            record(done, *_run_safely(index, spec, target))
    else:
        logger.info(f"Executing {total} runs on {workers} worker processes")
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_run_safely, index, spec, target): index for index, spec in enumerate(specs)}
            for done, future in enumerate(as_completed(futures), start=1):
                index = futures[future]
                try:
                    outcome = future.result()
                except Exception as e:
                    outcome = index, None, _failure(index, specs[index], e)
                record(done, *outcome)

    failures.sort(key=lambda f: f.index)
    if failures:
        logger.warning(f"{len(failures)}/{total} runs failed")
    return BatchResult(specs=specs, bundles=bundles, failures=failures)

"""
File persistence for curves, reports and manifests.

All writes go through ``atomic_write_text`` (temp file + rename) so an
interrupted run never leaves a truncated CSV behind.
"""

import io
import json
import logging
import os
import random
import tempfile
import time
from typing import Any, Dict, List

import pandas as pd

from src.errors import CurveError, CurveParseError
from src.models.curves import (
    CurveBundle,
    InterferenceCurve,
    PerformanceCurve,
    PopulationCurve,
)

logger = logging.getLogger(__name__)

CURVE_COLUMNS = [
    "t",
    "interval_len",
    "swarm_size",
    "controller",
    "condition",
    "perf",
    "interference",
    "tasked_size",
]
SEED_PREFIX = "# run_seed="


def _retry_with_backoff(func, *args, max_retries=3, base_delay=0.1, **kwargs):
    """
    Retry a filesystem operation with exponential backoff.

    Only errors that look transient (locked/busy files, interrupted I/O) are
    retried; anything else is raised as RuntimeError immediately.
    """
    last_exception = None

    for attempt in range(max_retries + 1):
        try:
            result = func(*args, **kwargs)
            if attempt > 0:
                logger.info(f"File operation succeeded after {attempt} retries")
            return result

        except OSError as e:
            last_exception = e
            error_str = str(e).lower()

            is_retryable = (
                isinstance(e, (PermissionError, InterruptedError, BlockingIOError))
                or "busy" in error_str
                or "locked" in error_str
                or "temporarily unavailable" in error_str
                or "being used by another process" in error_str
            )

            if not is_retryable:
                logger.error(f"Non-retryable file error: {e}")
                raise RuntimeError(f"File operation failed: {e}") from e

            if attempt == max_retries:
                logger.error(f"Max retries ({max_retries}) reached for file operation")
                raise RuntimeError(f"File operation failed after {max_retries} retries: {e}") from e

            delay = base_delay * (2 ** attempt) + random.uniform(0.0, 0.1)
            delay = min(delay, 5)

            logger.warning(
                f"File operation failed (attempt {attempt + 1}/{max_retries + 1}), "
                f"retrying in {delay:.2f}s: {e}"
            )
            time.sleep(delay)

    raise RuntimeError(f"File operation failed after {max_retries} retries. Last error: {last_exception}")


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path via a sibling temp file and os.replace."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    def _write():
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=os.path.basename(path), dir=directory)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    _retry_with_backoff(_write)


def write_json(path: str, payload: Dict[str, Any]) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_frame(path: str, frame: pd.DataFrame) -> None:
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))


def bundle_to_frame(bundle: CurveBundle) -> pd.DataFrame:
    """One row per interval; floats rendered with repr so reading them back is exact."""
    perf = bundle.performance
    n = len(bundle)
    return pd.DataFrame(
        {
            "t": [str(i) for i in range(n)],
            "interval_len": [str(perf.interval_len)] * n,
            "swarm_size": [str(perf.swarm_size)] * n,
            "controller": [perf.controller_id] * n,
            "condition": [perf.condition_tag] * n,
            "perf": [repr(float(x)) for x in perf.values],
            "interference": [repr(float(x)) for x in bundle.interference.values],
            "tasked_size": [str(int(x)) for x in bundle.population.values],
        },
        columns=CURVE_COLUMNS,
    )


def write_curves(bundle: CurveBundle, path: str) -> None:
    for label in (bundle.controller_id, bundle.condition_tag):
        if any(ch in label for ch in ',"\r\n'):
            raise CurveError(f"label {label!r} cannot contain commas, quotes or newlines")
    text = f"{SEED_PREFIX}{bundle.run_seed}\n" + bundle_to_frame(bundle).to_csv(
        index=False, lineterminator="\n"
    )
    atomic_write_text(path, text)
    logger.debug(f"Wrote {len(bundle)} intervals to {path}")


def _parse_int(cell: str, column: str, line: int) -> int:
    try:
        return int(cell)
    except ValueError:
        raise CurveParseError(line, f"column '{column}' is not an integer: {cell!r}") from None


def _parse_float(cell: str, column: str, line: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise CurveParseError(line, f"column '{column}' is not numeric: {cell!r}") from None


def read_curves(path: str) -> CurveBundle:
    """Parse a curve CSV written by write_curves (or by hand in the same format)."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()

    run_seed = 0
    offset = 0  # physical lines consumed before the header
    if lines and lines[0].startswith(SEED_PREFIX):
        run_seed = _parse_int(lines[0][len(SEED_PREFIX):].strip(), "run_seed", 1)
        offset = 1
    body = lines[offset:]
    if not body:
        raise CurveParseError(offset + 1, "missing header")

    header = [c.strip() for c in body[0].split(",")]
    if header != CURVE_COLUMNS:
        raise CurveParseError(
            offset + 1, f"malformed header, expected {','.join(CURVE_COLUMNS)} got {body[0]!r}"
        )

    try:
        frame = pd.read_csv(
            io.StringIO("\n".join(body)),
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
        )
    except pd.errors.ParserError as e:
        raise CurveParseError(offset + 1, f"column count mismatch: {e}") from None

    # Short rows are padded by pandas; detect them on the raw text instead.
    for i, raw_line in enumerate(body[1:]):
        if raw_line.count(",") != len(CURVE_COLUMNS) - 1:
            raise CurveParseError(
                offset + 2 + i,
                f"expected {len(CURVE_COLUMNS)} columns, found {raw_line.count(',') + 1}",
            )
    if frame.empty:
        raise CurveParseError(offset + 2, "no data rows")

    perf: List[float] = []
    intf: List[float] = []
    tasked: List[int] = []
    meta = None
    for i, row in enumerate(frame.itertuples(index=False)):
        line = offset + 2 + i
        t = _parse_int(row.t, "t", line)
        if t != i:
            raise CurveParseError(line, f"expected t={i}, found {t}")
        row_meta = (
            _parse_int(row.interval_len, "interval_len", line),
            _parse_int(row.swarm_size, "swarm_size", line),
            row.controller,
            row.condition,
        )
        if meta is None:
            meta = row_meta
        elif row_meta != meta:
            raise CurveParseError(line, "interval_len/swarm_size/controller/condition change mid-file")

        p = _parse_float(row.perf, "perf", line)
        if p < 0:
            raise CurveParseError(line, f"negative performance {p}")
        x = _parse_float(row.interference, "interference", line)
        if not 0.0 <= x <= 1.0:
            raise CurveParseError(line, f"interference {x} outside [0, 1]")
        n = _parse_int(row.tasked_size, "tasked_size", line)
        if n < 0 or n > row_meta[1]:
            raise CurveParseError(line, f"tasked_size {n} outside [0, {row_meta[1]}]")
        perf.append(p)
        intf.append(x)
        tasked.append(n)

    interval_len, swarm_size, controller, condition = meta
    if interval_len < 1 or swarm_size < 1:
        raise CurveParseError(offset + 2, "interval_len and swarm_size must be positive")
    common = dict(
        interval_len=interval_len,
        swarm_size=swarm_size,
        controller_id=controller,
        condition_tag=condition,
    )
    return CurveBundle(
        performance=PerformanceCurve(values=tuple(perf), **common),
        interference=InterferenceCurve(values=tuple(intf), **common),
        population=PopulationCurve(values=tuple(tasked), interval_len=interval_len),
        run_seed=run_seed,
    )

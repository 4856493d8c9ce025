"""
Robustness measures: sensor/actuator noise, population dynamics and swarm availability.

The three population queues (addition from reserve, permanent removal,
temporary removal) are combined into one queue of robots *not* in the tasked
swarm, arrivals at lambda_d + lambda_bd, service at mu_b + mu_bd, rates per
timestep.
"""

import logging
import math
from collections import deque
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.dtw import DEFAULT_DTW, DtwConfig, dtw_distance
from src.errors import CurveError, UnstableQueueError
from src.models.curves import PerformanceCurve, require_compatible
from src.models.profiles import QueueRates

logger = logging.getLogger(__name__)


class RobustnessInput(BaseModel):
    model_config = ConfigDict(frozen=True)

    perf_ideal: PerformanceCurve
    perf_actual: PerformanceCurve
    rates: QueueRates
    rates_ideal: QueueRates = Field(default_factory=QueueRates)
    total_time: int = Field(..., gt=0, description="Run length T in timesteps")


def sa_robustness(perf_ideal: PerformanceCurve, perf_actual: PerformanceCurve, dtw_cfg: DtwConfig = DEFAULT_DTW) -> float:
    """DTW between the noise-free curve and the noisy one; 0 is optimal."""
    require_compatible(perf_ideal, perf_actual)
    return dtw_distance(perf_ideal.values, perf_actual.values, dtw_cfg)


def utilization(rates: QueueRates) -> float:
    """rho = (lambda_d + lambda_bd) / (mu_b + mu_bd)."""
    if rates.service_rate <= 0:
        raise UnstableQueueError("utilization undefined: mu_b + mu_bd is zero")
    rho = rates.departure_rate / rates.service_rate
    if rho >= 1:
        logger.warning(f"Utilization {rho:.4g} >= 1: not-tasked queue is unstable")
    return rho


def is_stable(rates: QueueRates) -> bool:
    return rates.service_rate > rates.departure_rate


def queue_length(rho: float) -> float:
    """Mean waiting-line length rho^2 / (1 - rho)."""
    if rho < 0:
        raise CurveError(f"utilization cannot be negative: {rho}")
    if rho >= 1:
        raise UnstableQueueError(f"unstable queue: rho={rho}")
    return rho * rho / (1.0 - rho)


def time_not_tasked(rates: QueueRates) -> float:
    """T_S-bar: queue sojourn 1/(mu - lambda) plus one re-integration period 1/mu.

    With no dynamics at all no robot ever leaves, so the value is 0.
    """
    if rates.is_zero:
        return 0.0
    mu, lam = rates.service_rate, rates.departure_rate
    if not mu > lam:
        raise UnstableQueueError(
            f"unstable queue: mu_b + mu_bd = {mu} must exceed lambda_d + lambda_bd = {lam}"
        )
    return 1.0 / (mu - lam) + 1.0 / mu


def time_tasked(rates: QueueRates, total_time: int) -> float:
    """T_S = T - T_S-bar, floored at 0."""
    value = total_time - time_not_tasked(rates)
    if value < 0:
        logger.warning(f"T_S-bar exceeds run length {total_time}; T_S floored at 0")
        return 0.0
    return value


def pd_robustness_weighted(perf_ideal: PerformanceCurve, perf_actual: PerformanceCurve, weight: float) -> float:
    require_compatible(perf_ideal, perf_actual)
    return float(np.sum(perf_actual.array - weight * perf_ideal.array))


def population_weight(rates: QueueRates, rates_ideal: QueueRates, total_time: int) -> float:
    ideal = time_tasked(rates_ideal, total_time)
    if ideal <= 0:
        raise CurveError("ideal tasked time is zero; population weight undefined")
    return time_tasked(rates, total_time) / ideal


def pd_robustness(data: RobustnessInput) -> float:
    """Sum over t of P(N_S(t), t) - (T_S / T_S_ideal) * P_ideal(N_S(t), t); higher is better."""
    weight = population_weight(data.rates, data.rates_ideal, data.total_time)
    return pd_robustness_weighted(data.perf_ideal, data.perf_actual, weight)


def _check_population(n: int, n_min: int) -> None:
    if n < 1:
        raise CurveError(f"N must be >= 1, got {n}")
    if not 1 <= n_min <= n:
        raise CurveError(f"N_min must be in [1, {n}], got {n_min}")


def availability(rho: float, n: int, n_min: int) -> float:
    """p_v = pi_N * (1 + sum_{k=N_min}^{N-1} prod_{i=k+1}^{N} 1/rho), clamped to [0, 1].

    pi_N = rho^N (1 - rho) / (1 - rho^(N+1)) is the steady-state probability that
    the finite not-tasked queue holds all N robots. Each summand
    pi_N * rho^-(N-k) equals rho^k (1 - rho) / (1 - rho^(N+1)); the sum is taken
    in that form so rho^-N cannot overflow for large swarms.
    """
    if not 0 < rho < 1:
        raise UnstableQueueError(f"availability needs 0 < rho < 1, got {rho}")
    _check_population(n, n_min)
    norm = (1.0 - rho) / (1.0 - rho ** (n + 1))
    terms = np.power(rho, np.arange(n_min, n + 1, dtype=float))
    return float(min(1.0, max(0.0, terms.sum() * norm)))


def pi_full(rho: float, n: int) -> float:
    """pi_N: probability that all N robots are outside the tasked swarm."""
    if not 0 < rho < 1:
        raise UnstableQueueError(f"pi_N needs 0 < rho < 1, got {rho}")
    return rho ** n * (1.0 - rho) / (1.0 - rho ** (n + 1))


def stationary_distribution(rho: float, n: int) -> np.ndarray:
    """Stationary law of the number of robots outside S, by dense linear solve.

    Birth-death chain on {0..N}: k -> k+1 at rate rho (a tasked robot leaves),
    k -> k-1 at rate 1 (a robot returns).
    """
    if rho < 0:
        raise CurveError(f"utilization cannot be negative: {rho}")
    if n < 1:
        raise CurveError(f"N must be >= 1, got {n}")
    size = n + 1
    q = np.zeros((size, size))
    for k in range(size):
        if k < n:
            q[k, k + 1] = rho
        if k > 0:
            q[k, k - 1] = 1.0
        q[k, k] = -q[k].sum()
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(size)
    b[-1] = 1.0
    return np.linalg.solve(a, b)


def tasked_availability(rho: float, n: int, n_min: int) -> float:
    """Probability that at least N_min robots are in the tasked swarm."""
    if not 0 <= rho < 1:
        raise UnstableQueueError(f"tasked availability needs 0 <= rho < 1, got {rho}")
    _check_population(n, n_min)
    weights = np.power(rho, np.arange(n + 1, dtype=float))
    pi = weights / weights.sum()
    return float(min(1.0, max(0.0, pi[: n - n_min + 1].sum())))


def max_utilization(n: int, n_min: int, target: float, tol: float = 1e-12) -> float:
    """Largest rho in [0, 1) keeping tasked_availability(rho, N, N_min) >= target."""
    _check_population(n, n_min)
    if not 0 < target <= 1:
        raise CurveError(f"target availability must be in (0, 1], got {target}")
    lo, hi = 0.0, 1.0 - 1e-15
    if tasked_availability(hi, n, n_min) >= target:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if tasked_availability(mid, n, n_min) >= target:
            lo = mid
        else:
            hi = mid
    return lo


class QueueTrace(BaseModel):
    """Summary of an event-driven run of the not-tasked queue."""

    model_config = ConfigDict(frozen=True)

    horizon: float
    n_served: int
    mean_time_out: float = Field(..., description="Sojourn plus re-integration, per served robot")
    mean_sojourn: float
    mean_waiting: float = Field(..., description="Time-averaged number waiting behind the server")
    occupancy: Tuple[float, ...] = Field(..., description="Time fraction per queue size; last bin is >= len-1")

    def fraction_at_least(self, k: int) -> float:
        return float(sum(self.occupancy[k:]))


def simulate_queue(
    rates: QueueRates,
    horizon: float,
    seed: int,
    capacity: Optional[int] = None,
    max_bins: int = 64,
) -> QueueTrace:
    """Gillespie simulation of the combined not-tasked queue (FIFO, one server).

    With ``capacity`` the queue is finite: no departures from S while all
    ``capacity`` robots are already outside it.
    """
    lam, mu = rates.departure_rate, rates.service_rate
    if mu <= 0:
        raise UnstableQueueError("simulate_queue needs mu_b + mu_bd > 0")
    if capacity is None and not mu > lam:
        raise UnstableQueueError(f"unstable queue: lambda={lam} >= mu={mu}")
    rng = np.random.default_rng(seed)
    bins = (capacity + 1) if capacity is not None else max_bins
    occupancy = np.zeros(bins)

    t = 0.0
    waiting_area = 0.0
    arrivals: deque = deque()
    sojourns = []
    out_times = []

    while t < horizon:
        count = len(arrivals)
        arrive = lam if capacity is None or count < capacity else 0.0
        serve = mu if count > 0 else 0.0
        total = arrive + serve
        if total == 0:
            occupancy[0] += horizon - t
            break
        dt = rng.exponential(1.0 / total)
        dt_clipped = min(dt, horizon - t)
        occupancy[min(count, bins - 1)] += dt_clipped
        waiting_area += max(count - 1, 0) * dt_clipped
        t += dt
        if t >= horizon:
            break
        if rng.random() * total < arrive:
            arrivals.append(t)
        else:
            sojourn = t - arrivals.popleft()
            sojourns.append(sojourn)
            out_times.append(sojourn + rng.exponential(1.0 / mu))

    n_served = len(sojourns)
    return QueueTrace(
        horizon=horizon,
        n_served=n_served,
        mean_time_out=float(np.mean(out_times)) if n_served else math.nan,
        mean_sojourn=float(np.mean(sojourns)) if n_served else math.nan,
        mean_waiting=waiting_area / horizon,
        occupancy=tuple(float(x) for x in occupancy / horizon),
    )

"""
Reactivity and adaptability.

Both compare a measured curve against an ideal-behaviour reference with DTW;
0 is optimal. Under speed throttling a larger V_dev means worse conditions,
so by default the ideal-reactivity reference is scaled by
I_ec / (V_dev + I_ec); ``literal=True`` uses (V_dev + I_ec) / I_ec instead.
"""

from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.dtw import DEFAULT_DTW, DtwConfig, dtw_distance
from src.errors import CurveError
from src.models.curves import PerformanceCurve, require_compatible
from src.models.profiles import VarianceProfile


class FlexibilityInput(BaseModel):
    model_config = ConfigDict(frozen=True)

    perf_ideal: PerformanceCurve
    perf_actual: PerformanceCurve
    profile: VarianceProfile = Field(default_factory=VarianceProfile)
    dtw_cfg: DtwConfig = DEFAULT_DTW
    literal: bool = False


def proportionality_from(v_dev: float, i_ec: float) -> float:
    if i_ec == 0:
        raise CurveError("undefined proportionality: I_ec is zero")
    return (v_dev + i_ec) / i_ec


def proportionality(profile: VarianceProfile, t: float) -> float:
    """c_t = (V_dev(t) + I_ec(t)) / I_ec(t)."""
    i_ec = float(profile.ideal_at(t))
    if i_ec == 0:
        raise CurveError(f"undefined proportionality at t={t}")
    return proportionality_from(float(profile.deviation_at(t)), i_ec)


def reactivity_scales(profile: VarianceProfile, n_points: int, interval_len: int, literal: bool = False) -> np.ndarray:
    """Per-interval scale applied to P_ideal to get the ideal-reactivity curve."""
    i_ec, v_dev = profile.sample(n_points, interval_len)
    if np.any(i_ec == 0):
        raise CurveError("undefined proportionality: I_ec is zero")
    if literal:
        return (v_dev + i_ec) / i_ec
    denom = v_dev + i_ec
    if np.any(denom == 0):
        raise CurveError("undefined proportionality: V_dev + I_ec is zero")
    return i_ec / denom


def scaled_curve(perf_ideal: PerformanceCurve, scales: Sequence[float]) -> PerformanceCurve:
    scales = np.asarray(scales, dtype=float)
    if scales.shape != (len(perf_ideal),):
        raise CurveError(f"expected {len(perf_ideal)} scales, got {scales.size}")
    return perf_ideal.replace_values(scales * perf_ideal.array)


def ideal_reactivity_curve(perf_ideal: PerformanceCurve, profile: VarianceProfile, literal: bool = False) -> PerformanceCurve:
    scales = reactivity_scales(profile, len(perf_ideal), perf_ideal.interval_len, literal)
    return scaled_curve(perf_ideal, scales)


def reactivity(data: FlexibilityInput) -> float:
    require_compatible(data.perf_ideal, data.perf_actual)
    reference = ideal_reactivity_curve(data.perf_ideal, data.profile, data.literal)
    return dtw_distance(reference.values, data.perf_actual.values, data.dtw_cfg)


def adaptability(data: FlexibilityInput) -> float:
    """The ideal-adaptability curve is P_ideal itself."""
    require_compatible(data.perf_ideal, data.perf_actual)
    return dtw_distance(data.perf_ideal.values, data.perf_actual.values, data.dtw_cfg)

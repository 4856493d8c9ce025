"""
Shared fixtures: small worlds that simulate in well under a second and
hand-built curve bundles for the metric and report tests.
"""

from typing import Optional, Sequence

import pytest

from src.models.curves import CurveBundle, InterferenceCurve, PerformanceCurve, PopulationCurve
from src.models.scenario import Nest, WorldConfig


@pytest.fixture
def small_world():
    """Factory for an 8x8 m world with a 2x2 m nest on the left edge."""

    def build(**overrides) -> WorldConfig:
        data = dict(
            arena_w=8.0,
            arena_h=8.0,
            nest=Nest(center_x=0.15, center_y=0.5, width=2.0, height=2.0),
            n_robots=4,
            n_blocks=10,
            duration=1000,
            interval_len=200,
        )
        data.update(overrides)
        return WorldConfig(**data)

    return build


@pytest.fixture
def make_bundle():
    """Factory for a CurveBundle from a performance sequence."""

    def build(
        perf: Sequence[float],
        swarm_size: int = 1,
        interference: Optional[Sequence[float]] = None,
        tasked: Optional[Sequence[int]] = None,
        interval_len: int = 200,
        controller: str = "crw",
        seed: int = 0,
    ) -> CurveBundle:
        n = len(perf)
        common = dict(interval_len=interval_len, swarm_size=swarm_size, controller_id=controller)
        return CurveBundle(
            performance=PerformanceCurve(values=tuple(float(x) for x in perf), **common),
            interference=InterferenceCurve(
                values=tuple(float(x) for x in (interference if interference is not None else [0.0] * n)),
                **common,
            ),
            population=PopulationCurve(
                values=tuple(tasked if tasked is not None else [swarm_size] * n),
                interval_len=interval_len,
            ),
            run_seed=seed,
        )

    return build

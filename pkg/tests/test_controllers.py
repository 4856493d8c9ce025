import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.models.scenario import RobotSpec
from src.sim.controllers import (
    CrwController,
    CrwParams,
    DpoController,
    DpoParams,
    Sensed,
    make_controller,
)


def sensed(k=1, n_blocks=2, **fields):
    data = dict(
        robot_ids=np.arange(k),
        position=np.full((k, 2), 5.0),
        heading=np.zeros(k),
        carrying=np.zeros(k, dtype=bool),
        nest_bearing=np.full(k, math.pi),
        in_nest=np.zeros(k, dtype=bool),
        visible=np.zeros((k, n_blocks), dtype=bool),
        offset=np.zeros((k, n_blocks, 2)),
    )
    data.update(fields)
    return Sensed(**data)


def test_make_controller():
    assert isinstance(make_controller("crw"), CrwController)
    dpo = make_controller("dpo", {"decay_rho": 0.8})
    assert isinstance(dpo, DpoController)
    assert dpo.params.decay_rho == 0.8
    with pytest.raises(ValueError, match="unknown controller"):
        make_controller("aco")
    with pytest.raises(ValidationError):
        make_controller("crw", {"decay_rho": 0.8})


def test_carrying_robot_in_nest_drops():
    crw = make_controller("crw")
    s = sensed(carrying=np.array([True]), in_nest=np.array([True]))
    actions = crw.decide(s, None, np.random.default_rng(0))
    assert actions.drop.tolist() == [True]
    assert actions.pickup.tolist() == [-1]


def test_carrying_robot_outside_nest_turns_home():
    crw = make_controller("crw")
    s = sensed(carrying=np.array([True]), heading=np.array([0.5]), nest_bearing=np.array([1.0]))
    actions = crw.decide(s, None, np.random.default_rng(0))
    assert actions.turn[0] == pytest.approx(0.5)
    assert actions.speed[0] == RobotSpec().speed
    assert not actions.drop[0]


def test_explorer_next_to_block_picks_it_up():
    crw = make_controller("crw")
    offset = np.zeros((1, 2, 2))
    offset[0, 1] = [0.1, 0.0]
    s = sensed(visible=np.array([[False, True]]), offset=offset)
    actions = crw.decide(s, None, np.random.default_rng(0))
    assert actions.pickup.tolist() == [1]


def test_tiny_turn_stddev_walks_straight():
    crw = CrwController(CrwParams(turn_stddev=1e-12), RobotSpec())
    actions = crw.decide(sensed(k=5), None, np.random.default_rng(0))
    assert np.all(np.abs(actions.turn) < 1e-9)
    assert np.all(actions.speed == RobotSpec().speed)


def test_same_stream_same_actions():
    crw = make_controller("crw")
    a = crw.decide(sensed(k=8), None, np.random.default_rng(42))
    b = crw.decide(sensed(k=8), None, np.random.default_rng(42))
    assert a.turn.tolist() == b.turn.tolist()


def test_crw_keeps_no_memory():
    crw = make_controller("crw")
    memory = crw.init_memory(3, 2)
    offset = np.zeros((3, 2, 2))
    offset[:, 0] = [0.4, 0.0]
    visible = np.zeros((3, 2), dtype=bool)
    visible[:, 0] = True
    crw.observe(memory, sensed(k=3, visible=visible, offset=offset))
    assert memory is None
    assert all(crw.snapshot(memory, r) == {} for r in range(3))


def test_dpo_without_memory_behaves_like_crw():
    dpo = make_controller("dpo")
    crw = make_controller("crw")
    memory = dpo.init_memory(4, 2)
    a = dpo.decide(sensed(k=4), memory, np.random.default_rng(3))
    b = crw.decide(sensed(k=4), None, np.random.default_rng(3))
    assert a.turn.tolist() == b.turn.tolist()
    assert a.speed.tolist() == b.speed.tolist()


def test_dpo_density_decays_geometrically():
    dpo = DpoController(DpoParams(decay_rho=0.9), RobotSpec())
    memory = dpo.init_memory(1, 1)
    offset = np.array([[[0.5, 0.0]]])
    dpo.observe(memory, sensed(n_blocks=1, visible=np.array([[True]]), offset=offset))
    assert memory.density[0, 0] == 1.0
    for _ in range(2):
        dpo.observe(memory, sensed(n_blocks=1))
    assert memory.density[0, 0] == pytest.approx(0.81)
    assert dpo.snapshot(memory, 0)[0][:2] == pytest.approx((5.5, 5.0))


def test_dpo_forgets_block_missing_from_remembered_spot():
    dpo = make_controller("dpo")
    memory = dpo.init_memory(1, 1)
    memory.density[0, 0] = 1.0
    memory.position[0, 0] = [5.1, 5.0]
    dpo.observe(memory, sensed(n_blocks=1))
    assert memory.density[0, 0] == 0.0


def test_dpo_prefers_denser_block_at_equal_distance():
    dpo = make_controller("dpo")
    memory = dpo.init_memory(1, 2)
    memory.density[0] = [0.3, 0.9]
    memory.position[0] = [[7.0, 5.0], [3.0, 5.0]]
    assert dpo.targets(memory, sensed()).tolist() == [1]

    actions = dpo.decide(sensed(), memory, np.random.default_rng(0))
    # Block 1 lies due west of the robot.
    assert abs(actions.turn[0]) == pytest.approx(math.pi)


def test_dpo_pickup_clears_density():
    dpo = make_controller("dpo")
    memory = dpo.init_memory(2, 3)
    memory.density[1, 2] = 0.7
    dpo.on_pickup(memory, 1, 2)
    assert memory.density[1, 2] == 0.0
    memory.density[0] = 0.5
    dpo.forget(memory, np.array([0]))
    assert memory.density[0].tolist() == [0.0, 0.0, 0.0]

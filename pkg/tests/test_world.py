import numpy as np
import pytest

from src.errors import PlacementError
from src.models.profiles import NoiseProfile, Perturbations, PopulationProfile, QueueRates
from src.models.scenario import Distribution, DistributionKind, Nest, PerformanceMode, WorldConfig
from src.models.storage import bundle_to_frame
from src.sim.perturb import REMOVED, RESERVE, TASKED
from src.sim.world import BlockState, RobotMode, init_world, make_streams, run, simulate


def test_streams_are_independent_of_each_other():
    a = make_streams(5)
    b = make_streams(5)
    assert a["noise"].random() == b["noise"].random()
    assert a["noise"].random() != a["population"].random()


def test_init_is_deterministic(small_world):
    config = small_world(seed=3)
    a = init_world(config)
    b = init_world(config)
    assert np.array_equal(a.pos, b.pos)
    assert np.array_equal(a.heading, b.heading)
    assert np.array_equal(a.block_pos, b.block_pos)
    assert not np.array_equal(a.pos, init_world(small_world(seed=4)).pos)


def test_robots_and_blocks_start_outside_nest(small_world):
    world = init_world(small_world(n_robots=12, n_blocks=40))
    assert not world.in_nest(world.pos).any()
    assert not world.in_nest(world.block_pos).any()
    assert (world.status == TASKED).all()


def test_single_source_blocks_stay_in_cluster():
    config = WorldConfig(n_blocks=20, distribution=Distribution(kind=DistributionKind.SINGLE_SOURCE, cluster_size=3.0))
    world = init_world(config)
    x0, y0, x1, y1 = world.cluster_rects[0]
    assert x1 - x0 == pytest.approx(3.0)
    assert np.all((world.block_pos[:, 0] >= x0) & (world.block_pos[:, 0] <= x1))
    assert np.all((world.block_pos[:, 1] >= y0) & (world.block_pos[:, 1] <= y1))
    # The source sits on the far side of the arena from the nest.
    assert (x0 + x1) / 2 > world.nest_center[0]


def test_power_law_cluster_sizes_sum_to_block_count():
    config = WorldConfig(n_blocks=64, distribution=Distribution(kind=DistributionKind.POWER_LAW, clusters=4, exponent=2.0))
    world = init_world(config)
    counts = np.bincount(world.block_cluster, minlength=4)
    assert counts.sum() == 64
    assert len(world.cluster_rects) == 4


def test_infeasible_placement():
    config = WorldConfig(
        arena_w=1.0,
        arena_h=1.0,
        nest=Nest(center_x=0.5, center_y=0.5, width=0.2, height=0.2),
        n_blocks=1000,
    )
    with pytest.raises(PlacementError):
        init_world(config)


def test_initial_tasked_below_swarm_size_starts_reserve(small_world):
    perturbations = Perturbations(population=PopulationProfile(initial_tasked=3))
    world = init_world(small_world(n_robots=5), perturbations=perturbations)
    assert (world.status == TASKED).sum() == 3
    assert (world.status == RESERVE).sum() == 2


def test_removed_robots_stay_out_of_the_swarm(small_world):
    rates = QueueRates(lambda_d=0.05, mu_b=0.05)
    perturbations = Perturbations(population=PopulationProfile(rates=rates, initial_tasked=4))
    world = init_world(small_world(n_robots=8), perturbations=perturbations)
    ever_removed = np.zeros(8, dtype=bool)
    for _ in range(400):
        world.step()
        assert not (ever_removed & (world.status == TASKED)).any()
        ever_removed |= world.status == REMOVED
    assert ever_removed.any()


def test_empty_swarm_changes_nothing(small_world):
    world = init_world(small_world(n_robots=0))
    blocks = world.block_pos.copy()
    for _ in range(20):
        events = world.step()
        assert (events.collected, events.first_pickups, events.avoiding, events.active) == (0, 0, 0, 0)
    assert np.array_equal(world.block_pos, blocks)
    assert (world.block_state == BlockState.FREE).all()


def test_close_robots_both_avoid(small_world):
    world = init_world(small_world(n_robots=2, n_blocks=1))
    world.pos[:] = [[5.0, 5.0], [5.05, 5.0]]
    world.block_pos[0] = [7.5, 7.5]
    events = world.step()
    assert events.avoiding == 2
    assert (world.mode == RobotMode.AVOIDING).all()


def test_avoidance_expires(small_world):
    world = init_world(small_world(n_robots=2, n_blocks=1))
    world.pos[:] = [[5.0, 6.0], [5.05, 6.0]]
    world.block_pos[0] = [7.5, 7.5]
    world.step()
    for _ in range(world.config.robot.avoid_duration):
        world.step()
    assert (world.mode == RobotMode.EXPLORING).all()


def test_robot_next_to_block_picks_it_up(small_world):
    world = init_world(small_world(n_robots=1, n_blocks=1))
    world.pos[0] = [5.0, 5.0]
    world.block_pos[0] = [5.05, 5.0]
    events = world.step()
    assert world.mode[0] == RobotMode.CARRYING
    assert world.block_state[0] == BlockState.CARRIED
    assert world.carried[0] == 0
    assert events.first_pickups == 1
    world.step()
    assert world.mode[0] == RobotMode.HOMING
    assert np.array_equal(world.block_pos[0], world.pos[0])


def test_carrier_in_nest_delivers(small_world):
    world = init_world(small_world(n_robots=1, n_blocks=1))
    world.pos[0] = [5.0, 5.0]
    world.block_pos[0] = [5.05, 5.0]
    world.step()
    world.pos[0] = world.nest_center
    events = world.step()
    assert events.collected == 1
    assert world.carried[0] == -1
    # Transport mode respawns the block outside the nest.
    assert world.block_state[0] == BlockState.FREE
    assert not world.in_nest(world.block_pos[0])


def test_same_seed_same_curves(small_world):
    config = small_world(seed=11)
    a = run(config)
    b = run(config)
    assert a == b
    assert bundle_to_frame(a).equals(bundle_to_frame(b))
    assert a.run_seed == 11


def test_disabled_perturbations_leave_run_identical(small_world):
    config = small_world(seed=2, n_robots=6)
    plain = run(config, "dpo")
    silent_noise = run(config, "dpo", Perturbations(noise=NoiseProfile(sigma=0.0)))
    zero_rates = run(config, "dpo", Perturbations(population=PopulationProfile(rates=QueueRates())))
    assert silent_noise == plain
    assert zero_rates == plain


def test_noise_changes_the_run(small_world):
    config = small_world(seed=2, n_robots=6, duration=2000)
    plain = run(config)
    noisy = run(config, perturbations=Perturbations(noise=NoiseProfile(sigma=0.05)))
    assert noisy.condition_tag == "noise-sigma-0.05"
    assert (noisy.performance.values, noisy.interference.values) != (plain.performance.values, plain.interference.values)


def test_discovery_counts_each_block_once(small_world):
    config = small_world(
        n_robots=8,
        n_blocks=5,
        duration=3000,
        performance=PerformanceMode.DISCOVERY,
        block_respawn=False,
    )
    result = simulate(config, "dpo")
    assert result.summary.first_pickups <= 5
    total = sum(result.bundle.performance.values) * config.interval_len
    assert total == pytest.approx(result.summary.first_pickups)


def test_discovery_distances_recorded(small_world):
    result = simulate(small_world(seed=1, duration=2000), "dpo")
    assert len(result.summary.discovery_distances) > 0
    assert all(d >= 0 for d in result.summary.discovery_distances)


def test_curves_have_one_point_per_interval(small_world):
    config = small_world(duration=1100, interval_len=200)
    bundle = run(config)
    assert len(bundle) == 5
    assert bundle.population.values == (4,) * 5
    assert all(0.0 <= x <= 1.0 for x in bundle.interference.values)


def test_trace_written(tmp_path, small_world):
    path = tmp_path / "trace.csv"
    simulate(small_world(n_robots=2, duration=200), trace_path=str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "timestep,robot,x,y,mode"
    assert len(lines) == 1 + 2 * 200


def test_larger_swarm_collects_more(small_world):
    def collected(n, seed):
        return simulate(small_world(n_robots=n, seed=seed, duration=2000), "crw").summary.collected

    solo = np.mean([collected(1, s) for s in range(20)])
    team = np.mean([collected(4, s) for s in range(20)])
    assert team > solo


def test_blocks_are_conserved_without_respawn(small_world):
    config = small_world(n_robots=6, n_blocks=12, duration=1500, block_respawn=False, p_rw=0.05)
    world = init_world(config, "dpo")
    delivered = 0
    for _ in range(config.duration):
        world.step()
        states = world.block_state
        free = int((states == BlockState.FREE).sum())
        carried = int((states == BlockState.CARRIED).sum())
        in_nest = int((states == BlockState.IN_NEST).sum())
        assert free + carried + in_nest == config.n_blocks
        assert carried == int((world.carried >= 0).sum())
        assert in_nest >= delivered
        delivered = in_nest


def test_robots_and_blocks_stay_in_the_arena(small_world):
    config = small_world(n_robots=8, n_blocks=20, duration=1000, p_rw=0.2)
    noisy = Perturbations(noise=NoiseProfile(sigma=0.1))
    for controller in ("crw", "dpo"):
        world = init_world(config, controller, noisy)
        for _ in range(config.duration):
            world.step()
            for points in (world.pos, world.block_pos):
                assert (points[:, 0] >= 0.0).all() and (points[:, 0] <= config.arena_w).all()
                assert (points[:, 1] >= 0.0).all() and (points[:, 1] <= config.arena_h).all()


def test_dpo_discovers_closer_than_crw(small_world):
    def mean_distance(controller):
        distances = [
            simulate(small_world(seed=s, duration=2000), controller).summary.discovery_distances for s in range(20)
        ]
        return float(np.mean(np.concatenate([np.asarray(d, dtype=float) for d in distances])))

    assert mean_distance("dpo") <= mean_distance("crw")

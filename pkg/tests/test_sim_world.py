import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffnav.grid import OCCUPIED, OccupancyGrid, load_map, save_map
from diffnav.kinematics import KinematicParams, Pose, Twist
from diffnav.sim_world import (LidarConfig, NoiseModel, ScenarioName, SimState, builtin_scenario,
                               footprint_collides, make_rng, raycast, simulate_scan, step_sim)


def march(grid, x, y, angle, max_range, step=1e-4):
    """Dense sampling oracle: first sample along the ray inside an occupied cell."""
    occ = grid.occupied_mask()
    n = int(max_range / step)
    for i in range(n + 1):
        t = i * step
        col, row = grid.world_to_cell(x + t * math.cos(angle), y + t * math.sin(angle))
        if not grid.in_bounds(col, row):
            return max_range
        if occ[row, col]:
            return t
    return max_range


def line_of_sight(grid, a, b, step=0.01):
    n = int(math.hypot(b.x - a.x, b.y - a.y) / step) + 1
    occ = grid.occupied_mask()
    for i in range(n + 1):
        s = i / n
        col, row = grid.world_to_cell(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y))
        if occ[row, col]:
            return False
    return True


def test_raycast_empty_grid_returns_max_range():
    g = OccupancyGrid.empty(10, 10, 0.05)
    assert raycast(g, Pose(5, 5), 0.3, 4.0) == 4.0


def test_raycast_wall_ahead():
    g = OccupancyGrid.empty(6, 4, 0.05)
    g.fill_rect(3.0, 0.0, 3.05, 4.0)
    r = raycast(g, Pose(1.0, 2.0), 0.0, 5.0)
    assert 1.95 <= r <= 2.05
    assert r == pytest.approx(march(g, 1.0, 2.0, 0.0, 5.0), abs=1e-4)


def test_raycast_leaving_grid_returns_max_range():
    g = OccupancyGrid.empty(2, 2, 0.05)
    assert raycast(g, Pose(1.0, 1.0), 0.7, 5.0) == 5.0


def test_raycast_inside_obstacle_is_zero():
    g = OccupancyGrid.empty(2, 2, 0.05)
    g.fill_disc(1.0, 1.0, 0.2)
    assert raycast(g, Pose(1.0, 1.0), 1.0, 5.0) == 0.0


@given(st.integers(0, 2 ** 31), st.floats(0.0, 2 * math.pi))
def test_raycast_matches_marching_oracle(seed, angle):
    rng = np.random.default_rng(seed)
    g = OccupancyGrid(40, 40, 0.1, data=(rng.random((40, 40)) < 0.08).astype(float))
    g.data[20, 20] = 0.0
    x, y = g.cell_center(20, 20)
    x += rng.uniform(-0.04, 0.04)
    y += rng.uniform(-0.04, 0.04)
    r = raycast(g, Pose(x, y), angle, 3.0)
    # the oracle overshoots by at most one step and can miss a corner clip of under one step
    assert r == pytest.approx(march(g, x, y, angle, 3.0, step=1e-3), abs=2e-3)


def test_scan_zero_noise_equals_raycast():
    sc = builtin_scenario("obstacle_field")
    cfg = LidarConfig(num_beams=36, range_noise_std=0.0)
    pose = Pose(1.5, 1.2, 0.4)
    scan = simulate_scan(sc.grid, pose, cfg, make_rng(3))
    for a, r in zip(scan.angles, scan.ranges):
        assert r == raycast(sc.grid, pose, pose.theta + a, cfg.max_range)


def test_scan_same_seed_same_ranges():
    sc = builtin_scenario("obstacle_field")
    cfg = LidarConfig()
    a = simulate_scan(sc.grid, sc.start, cfg, make_rng(11))
    b = simulate_scan(sc.grid, sc.start, cfg, make_rng(11))
    np.testing.assert_array_equal(a.ranges, b.ranges)
    c = simulate_scan(sc.grid, sc.start, cfg, make_rng(12))
    assert not np.array_equal(a.ranges, c.ranges)


def test_scan_in_square_room():
    # interior 4 m wide, robot in the middle: every axis-aligned wall is 2 m away
    g = OccupancyGrid.empty(4.4, 4.4, 0.05)
    g.fill_rect(0.0, 0.0, 4.4, 0.2)
    g.fill_rect(0.0, 4.2, 4.4, 4.4)
    g.fill_rect(0.0, 0.0, 0.2, 4.4)
    g.fill_rect(4.2, 0.0, 4.4, 4.4)
    scan = simulate_scan(g, Pose(2.2, 2.2, 0.0), LidarConfig(4, range_noise_std=0.0))
    np.testing.assert_allclose(np.sort(scan.angles), [-math.pi, -math.pi / 2, 0.0, math.pi / 2])
    assert np.all(np.abs(scan.ranges - 2.0) <= 0.05)


def test_beam_angles_partial_fov():
    cfg = LidarConfig(num_beams=5, fov=math.pi)
    np.testing.assert_allclose(cfg.beam_angles(), np.linspace(-math.pi / 2, math.pi / 2, 5))


def test_endpoints_skip_max_range():
    g = OccupancyGrid.empty(10, 10, 0.05)
    g.fill_rect(6.0, 0.0, 6.05, 10.0)
    scan = simulate_scan(g, Pose(5.0, 5.0, 0.0), LidarConfig(4, range_noise_std=0.0))
    pts = scan.endpoints(Pose(5.0, 5.0, 0.0))
    assert pts.shape == (1, 2)
    assert pts[0] == pytest.approx((6.0, 5.0), abs=1e-9)


def test_zero_noise_odometry_tracks_truth():
    state = SimState(Pose(0.0, 0.0, 0.2))
    rng = make_rng(0)
    for k in range(50):
        state, odom, gyro = step_sim(state, Twist(0.5, 0.3 * math.sin(k / 5)), KinematicParams(), NoiseModel.zero(), rng)
        assert state.odom_pose == state.true_pose
        assert gyro == state.true_twist.w


def test_rotation_vibration_makes_odometry_noisier_than_gyro():
    state = SimState(Pose())
    rng = make_rng(5)
    odo, gyr = [], []
    for _ in range(1000):
        state, odom, gyro = step_sim(state, Twist(0.0, 1.0), KinematicParams(), NoiseModel(), rng)
        odo.append(odom.w)
        gyr.append(gyro)
    assert np.var(odo) > np.var(gyr)


def test_zero_command_keeps_state_and_reports_noise():
    state = SimState(Pose(1.0, 2.0, 0.5))
    rng = make_rng(9)
    gyros = []
    for _ in range(200):
        nxt, odom, gyro = step_sim(state, Twist(), KinematicParams(), NoiseModel(), rng)
        assert nxt.true_pose == state.true_pose
        gyros.append(gyro)
    assert abs(np.mean(gyros)) < 4 * NoiseModel().gyro_std / math.sqrt(200)
    assert np.std(gyros) == pytest.approx(NoiseModel().gyro_std, rel=0.25)


def test_make_rng_streams_are_independent_and_reproducible():
    a = make_rng(1, 0).standard_normal(5)
    assert np.array_equal(a, make_rng(1, 0).standard_normal(5))
    assert not np.array_equal(a, make_rng(1, 1).standard_normal(5))


def test_straight_obstacle_blocks_line_of_sight():
    sc = builtin_scenario("straight_obstacle")
    assert not line_of_sight(sc.grid, sc.start, sc.goal)
    # the block is missing from the prior map
    assert line_of_sight(sc.known_map, sc.start, sc.goal)
    assert len(sc.hidden_cells()) == 100


def test_corner_has_no_line_of_sight():
    sc = builtin_scenario("corner")
    assert not line_of_sight(sc.grid, sc.start, sc.goal)


@pytest.mark.parametrize("name", list(ScenarioName))
def test_start_and_goal_are_free(name):
    sc = builtin_scenario(name)
    for p in (sc.start, sc.goal):
        assert sc.grid.is_free(p.x, p.y)
        assert not footprint_collides(sc.grid, p, 0.2)


def test_scenario_name_parsing():
    assert ScenarioName.parse("StraightObstacle") is ScenarioName.STRAIGHT_OBSTACLE
    assert ScenarioName.parse("obstacle-field") is ScenarioName.OBSTACLE_FIELD
    with pytest.raises(ValueError):
        ScenarioName.parse("maze")


def test_footprint_collision_geometry():
    g = OccupancyGrid.empty(2, 2, 0.1)
    g.fill_rect(1.0, 0.0, 1.1, 2.0)  # cell square spans x in [1.0, 1.1)
    assert not footprint_collides(g, Pose(0.75, 1.05), 0.2)
    assert footprint_collides(g, Pose(0.85, 1.05), 0.2)


def test_map_text_round_trip(tmp_path):
    g = OccupancyGrid.empty(1.0, 0.6, 0.1, origin=Pose(-0.5, 2.0))
    g.fill_rect(0.0, 2.0, 0.5, 2.3)
    g.data[5, 0] = np.nan
    save_map(g, tmp_path / "m.txt")
    back = load_map(tmp_path / "m.txt")
    assert (back.width, back.height, back.resolution, back.origin) == (10, 6, 0.1, Pose(-0.5, 2.0))
    np.testing.assert_array_equal(back.occupied_mask(), g.occupied_mask())
    np.testing.assert_array_equal(back.unknown_mask(), g.unknown_mask())
    text = (tmp_path / "m.txt").read_text().splitlines()
    assert text[5][0] == "?"  # first body line is the top row


def test_load_map_rejects_bad_body(tmp_path):
    (tmp_path / "bad.txt").write_text("width 2\nheight 2\nresolution 0.1\norigin 0 0 0\n..\n.\n")
    with pytest.raises(ValueError):
        load_map(tmp_path / "bad.txt")


def test_grid_validation():
    with pytest.raises(ValueError):
        OccupancyGrid(2, 2, 0.0)
    with pytest.raises(ValueError):
        OccupancyGrid(2, 2, 0.1, data=np.full((2, 2), 1.5))
    g = OccupancyGrid.empty(1.0, 1.0, 0.05, fill=OCCUPIED)
    assert g.width * g.height == g.data.size == 400

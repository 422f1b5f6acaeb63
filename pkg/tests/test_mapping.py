import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffnav.grid import OccupancyGrid
from diffnav.kinematics import KinematicParams, Pose, Twist
from diffnav.mapping import (CollisionError, LogOddsGrid, MappingConfig, Particle, best_particle,
                             effective_sample_size, integrate_scan, load_scan_log, loop_drive_commands,
                             map_agreement, measurement_update, motion_update, normalize_weights,
                             record_drive, replay_scan_log, resample_if_needed, run_mapping, save_scan_log,
                             scan_likelihood, systematic_indices)
from diffnav.sim_world import LaserScan, LidarConfig, NoiseModel, make_rng, simulate_scan


def room(size=5.0, res=0.05):
    g = OccupancyGrid.empty(size, size, res)
    g.fill_rect(0, 0, size, 0.1)
    g.fill_rect(0, size - 0.1, size, size)
    g.fill_rect(0, 0, 0.1, size)
    g.fill_rect(size - 0.1, 0, size, size)
    return g


def small_world():
    g = room()
    g.fill_rect(2.2, 2.2, 2.8, 2.8)
    g.fill_disc(3.3, 3.3, 0.2)
    return g


def particles(poses, template, weights=None):
    n = len(poses)
    weights = weights or [1.0 / n] * n
    return [Particle(p, w, LogOddsGrid.like(template)) for p, w in zip(poses, weights)]


def test_zero_noise_particles_move_identically():
    cfg = MappingConfig(motion_noise=(0.0, 0.0))
    ps = particles([Pose(1, 1, 0.2)] * 5, room())
    out = motion_update(ps, Twist(0.5, 0.3), 0.1, cfg, make_rng(0))
    assert len({p.pose for p in out}) == 1


def test_no_motion_leaves_cloud_unchanged():
    ps = particles([Pose(1, 1, 0.2), Pose(2, 1, -0.5)], room())
    out = motion_update(ps, Twist(), 0.1, MappingConfig(motion_noise=(0.0, 0.0)), make_rng(0))
    assert [p.pose for p in out] == [p.pose for p in ps]


def test_translation_spread_matches_noise():
    cfg = MappingConfig(motion_noise=(0.1, 0.0))
    ps = particles([Pose()] * 1000, OccupancyGrid.empty(1, 1, 0.5))
    out = motion_update(ps, Twist(1.0, 0.0), 1.0, cfg, make_rng(4))
    xs = np.array([p.pose.x for p in out])
    assert 0.08 <= xs.std() <= 0.12
    assert xs.mean() == pytest.approx(1.0, abs=0.02)


def _map_with_cell(col, row, res=0.05, size=40):
    m = LogOddsGrid(size, size, res)
    m.logodds[row, col] = 3.0
    m.observed[:] = 1
    return m


def test_likelihood_endpoints_on_obstacles_score_one():
    m = _map_with_cell(30, 20)
    x, y = 0.5 * 0.05 + 10 * 0.05, 20.5 * 0.05  # centre of cell (10, 20)
    scan = LaserScan(np.array([0.0]), np.array([1.0]), 5.0)  # lands in cell (30, 20)
    assert scan_likelihood(m, Pose(x, y, 0.0), scan, MappingConfig()) == pytest.approx(1.0)


def test_likelihood_far_endpoints_hit_floor():
    m = _map_with_cell(0, 0)
    scan = LaserScan(np.array([0.0, 0.5]), np.array([1.2, 1.3]), 5.0)
    s = scan_likelihood(m, Pose(0.5, 0.6, 0.0), scan, MappingConfig(hit_sigma=0.02))
    assert s <= 1e-3 + 1e-15


def test_likelihood_geometric_mean():
    # obstacle at cell (30, 20); cell (32, 20) lies exactly hit_sigma = 0.1 m away
    m = _map_with_cell(30, 20)
    x, y = 10.5 * 0.05, 20.5 * 0.05
    scan = LaserScan(np.array([0.0, 0.0]), np.array([1.0, 1.1]), 5.0)
    s = scan_likelihood(m, Pose(x, y, 0.0), scan, MappingConfig(hit_sigma=0.1))
    assert s == pytest.approx(math.exp(-0.25), rel=1e-12)


def test_likelihood_outside_map_is_floor():
    m = _map_with_cell(0, 0)
    scan = LaserScan(np.array([0.0]), np.array([1.0]), 5.0)
    assert scan_likelihood(m, Pose(-3.0, 0.0, 0.0), scan, MappingConfig()) == 1e-3


def test_identical_particles_keep_uniform_weights():
    g = small_world()
    scan = simulate_scan(g, Pose(1, 1, 0), LidarConfig(range_noise_std=0.0))
    ps = particles([Pose(1, 1, 0)] * 4, g)
    for p in ps:
        integrate_scan(p.map, p.pose, scan, MappingConfig())
    out = measurement_update(ps, scan, MappingConfig())
    assert [p.weight for p in out] == pytest.approx([0.25] * 4)


def test_true_pose_particle_wins():
    g = small_world()
    truth = Pose(1.2, 1.3, 0.3)
    known = LogOddsGrid.from_prior(g)
    scan = simulate_scan(g, truth, LidarConfig(), make_rng(1))
    poses = [truth, Pose(2.2, 1.3, 0.3), Pose(1.2, 2.3, 0.3), Pose(0.2, 1.3, 0.3), Pose(1.2, 0.3, 0.3)]
    ps = [Particle(p, 0.2, known) for p in poses]
    out = measurement_update(ps, scan, MappingConfig())
    assert best_particle(out).pose == truth


def test_single_particle_weight_is_one():
    g = small_world()
    ps = particles([Pose(1, 1, 0)], g)
    scan = simulate_scan(g, Pose(1, 1, 0), LidarConfig(), make_rng(0))
    assert measurement_update(ps, scan, MappingConfig())[0].weight == 1.0


def test_degenerate_weights_reset_to_uniform():
    ps = particles([Pose()] * 3, room(), weights=[0.0, 0.0, 0.0])
    assert [p.weight for p in normalize_weights(ps)] == pytest.approx([1 / 3] * 3)


def test_uniform_weights_do_not_resample():
    ps = particles([Pose(i, 0, 0) for i in range(4)], room())
    assert effective_sample_size(ps) == pytest.approx(4.0)
    out = resample_if_needed(ps, MappingConfig(), make_rng(0))
    assert [p.pose for p in out] == [p.pose for p in ps]


def test_single_winner_resample_copies_it():
    ps = particles([Pose(i, 0, 0) for i in range(4)], room(), weights=[0, 0, 1.0, 0])
    assert effective_sample_size(ps) == pytest.approx(1.0)
    out = resample_if_needed(ps, MappingConfig(), make_rng(0))
    assert all(p.pose == Pose(2, 0, 0) for p in out)
    assert all(p.weight == 0.25 for p in out)
    # every copy owns its map
    assert len({id(p.map) for p in out}) == 4


def test_neff_threshold_example():
    ps = particles([Pose(i, 0, 0) for i in range(4)], room(), weights=[0.5, 0.5, 0, 0])
    assert effective_sample_size(ps) == pytest.approx(2.0)
    out = resample_if_needed(ps, MappingConfig(resample_neff_frac=0.6), make_rng(0))
    assert sorted(p.pose.x for p in out) == [0, 0, 1, 1]


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30), st.floats(0.0, 0.999999))
def test_systematic_resampling_counts(raw, u):
    w = np.array(raw) + 1e-3
    w /= w.sum()
    idx = systematic_indices(w, u)
    counts = np.bincount(idx, minlength=len(w))
    n = len(w)
    assert np.all(np.abs(counts - n * w) < 1.0 + 1e-9)
    assert np.all(np.diff(idx) >= 0)


def test_repeated_scans_saturate():
    g = small_world()
    cfg = MappingConfig()
    pose = Pose(1.0, 1.0, 0.0)
    scan = simulate_scan(g, pose, LidarConfig(range_noise_std=0.0))
    m = LogOddsGrid.like(g)
    for _ in range(30):
        integrate_scan(m, pose, scan, cfg)
    occ = m.logodds > 0
    assert np.all(m.logodds[occ] == cfg.l_max)
    assert np.all(m.logodds[(m.observed == 1) & ~occ] == -cfg.l_max)
    assert occ.sum() > 0


def test_max_range_beam_marks_only_free():
    m = LogOddsGrid.like(OccupancyGrid.empty(5, 5, 0.05))
    integrate_scan(m, Pose(0.5, 2.5, 0.0), LaserScan(np.array([0.0]), np.array([2.0]), 2.0), MappingConfig())
    assert (m.logodds > 0).sum() == 0
    assert (m.logodds < 0).sum() == 40


def test_wall_beam_cell_counts():
    g = OccupancyGrid.empty(5, 5, 0.05)
    g.fill_rect(2.5, 0, 2.55, 5)
    pose = Pose(0.5, 2.525, 0.0)
    scan = simulate_scan(g, pose, LidarConfig(1, fov=0.1, range_noise_std=0.0))
    assert scan.ranges[0] == pytest.approx(2.0)
    m = LogOddsGrid.like(g)
    integrate_scan(m, pose, scan, MappingConfig())
    assert (m.logodds > 0).sum() == 1
    assert (m.logodds < 0).sum() == 40
    assert m.logodds[50, 50] > 0


def test_to_occupancy_marks_unobserved_unknown():
    m = LogOddsGrid(3, 1, 0.1)
    m.logodds[0] = [1.0, -1.0, 0.0]
    m.observed[0] = [1, 1, 0]
    occ = m.to_occupancy()
    assert occ.data[0, 0] == 1.0 and occ.data[0, 1] == 0.0 and np.isnan(occ.data[0, 2])


def test_prior_seeding():
    g = small_world()
    g.data[0, 0] = np.nan
    m = LogOddsGrid.from_prior(g, confidence=2.0)
    assert m.observed[0, 0] == 0
    assert np.all(m.logodds[g.occupied_mask().astype(bool)] == 2.0)


def test_zero_noise_single_particle_map():
    g = small_world()
    cfg = MappingConfig(num_particles=1, motion_noise=(0.0, 0.0))
    est = run_mapping(g, loop_drive_commands(side=3.0), cfg, make_rng(0),
                      Pose(1.0, 1.0, 0.0), noise=NoiseModel.zero(), lidar=LidarConfig(range_noise_std=0.0))
    assert map_agreement(est, g) >= 0.99


def test_empty_drive_maps_first_scan_only():
    g = small_world()
    lidar = LidarConfig(range_noise_std=0.0)
    est = run_mapping(g, [], MappingConfig(num_particles=3), make_rng(0), Pose(1.0, 1.0, 0.0), lidar=lidar)
    m = LogOddsGrid.like(g)
    integrate_scan(m, Pose(1.0, 1.0, 0.0), simulate_scan(g, Pose(1.0, 1.0, 0.0), lidar), MappingConfig())
    np.testing.assert_array_equal(~np.isnan(est.data), m.observed.astype(bool))
    assert np.isnan(est.data).mean() > 0.5


def test_collision_aborts_drive():
    g = small_world()
    with pytest.raises(CollisionError) as exc:
        run_mapping(g, [Twist(0.5, 0.0)] * 100, MappingConfig(num_particles=1), make_rng(0), Pose(1.0, 2.5, 0.0))
    assert exc.value.step > 0


def test_scan_log_round_trip(tmp_path):
    g = small_world()
    log = record_drive(g, Pose(1.0, 1.0, 0.0), loop_drive_commands(side=3.0)[:30], KinematicParams(),
                       NoiseModel(), LidarConfig(), make_rng(2))
    save_scan_log(log, tmp_path / "drive.log")
    back = load_scan_log(tmp_path / "drive.log")
    assert back.dt == log.dt and back.lidar == log.lidar and back.start == log.start
    for a, b in zip(log.steps, back.steps):
        assert a.odom == b.odom and a.gyro == b.gyro
        np.testing.assert_array_equal(a.ranges, b.ranges)
    m1 = replay_scan_log(log, g, MappingConfig(num_particles=5), make_rng(7)).best().map
    m2 = replay_scan_log(back, g, MappingConfig(num_particles=5), make_rng(7)).best().map
    np.testing.assert_array_equal(m1.logodds, m2.logodds)


def test_map_agreement_definition():
    truth = OccupancyGrid(4, 1, 0.1, data=np.array([[0.0, 1.0, 0.0, 1.0]]))
    est = OccupancyGrid(4, 1, 0.1, data=np.array([[0.0, 0.0, np.nan, 1.0]]))
    assert map_agreement(est, truth) == pytest.approx(2 / 3)


def test_loop_drive_returns_home():
    from diffnav.kinematics import step_euler
    p = Pose(1.0, 1.0, 0.0)
    for c in loop_drive_commands(side=3.0):
        p = step_euler(p, c, 0.1)
    assert p.distance_to(Pose(1.0, 1.0)) < 1e-9


@pytest.mark.slow
def test_more_particles_do_not_hurt_median_agreement():
    g = small_world()
    cmds = loop_drive_commands(side=3.0)
    medians = []
    for n in (1, 30):
        scores = [map_agreement(run_mapping(g, cmds, MappingConfig(num_particles=n), make_rng(s),
                                            Pose(1.0, 1.0, 0.0)), g) for s in range(10)]
        medians.append(np.median(scores))
    assert medians[1] >= medians[0]

"""Deterministic simulated world: lidar, noisy odometry/gyro, scenarios.

Randomness always comes from an explicit ``numpy.random.Generator`` (PCG64
seeded through ``SeedSequence``), so a seed plus a command sequence fully
determines a run on every platform.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .grid import OCCUPIED, OccupancyGrid
from .kinematics import KinematicParams, Pose, Twist, step_euler


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed``; ``stream`` selects an independent child."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(stream))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class LidarConfig:
    num_beams: int = 72
    fov: float = 2.0 * math.pi
    max_range: float = 5.0
    range_noise_std: float = 0.01

    def __post_init__(self):
        if self.num_beams < 1 or not (0 < self.fov <= 2.0 * math.pi + 1e-12):
            raise ValueError(f"invalid lidar config {self}")
        if self.max_range <= 0 or self.range_noise_std < 0:
            raise ValueError(f"invalid lidar config {self}")

    def beam_angles(self) -> np.ndarray:
        """Robot-frame beam angles, evenly spread and centred on the heading."""
        n = self.num_beams
        if self.fov >= 2.0 * math.pi - 1e-12:
            return -math.pi + np.arange(n) * (2.0 * math.pi / n)
        if n == 1:
            return np.zeros(1)
        return np.linspace(-self.fov / 2.0, self.fov / 2.0, n)


@dataclass(frozen=True)
class LaserScan:
    angles: np.ndarray
    ranges: np.ndarray
    max_range: float

    def __post_init__(self):
        if len(self.angles) != len(self.ranges):
            raise ValueError("angles and ranges differ in length")

    def endpoints(self, pose: Pose, hits_only: bool = True) -> np.ndarray:
        """World-frame beam endpoints, shape (k, 2)."""
        a = pose.theta + self.angles
        pts = np.column_stack([pose.x + self.ranges * np.cos(a), pose.y + self.ranges * np.sin(a)])
        if hits_only:
            pts = pts[self.ranges < self.max_range]
        return pts


@dataclass(frozen=True)
class NoiseModel:
    """Sensor corruption.

    ``odom_v_std`` / ``odom_w_std`` are multiplicative (fraction of the true
    value). ``rotation_vibration_std`` adds yaw-rate noise to the wheel
    odometry proportional to |w|, i.e. only while the chassis turns.
    """

    odom_v_std: float = 0.02
    odom_w_std: float = 0.02
    rotation_vibration_std: float = 0.3
    gyro_std: float = 0.02

    def __post_init__(self):
        if min(self.odom_v_std, self.odom_w_std, self.rotation_vibration_std, self.gyro_std) < 0:
            raise ValueError("noise standard deviations must be non-negative")

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SimState:
    true_pose: Pose
    true_twist: Twist = Twist()
    odom_pose: Pose | None = None
    time: float = 0.0

    def __post_init__(self):
        if self.odom_pose is None:
            object.__setattr__(self, "odom_pose", self.true_pose)


def raycast(grid: OccupancyGrid, origin: Pose, angle: float, max_range: float) -> float:
    """Range along a world-frame ``angle`` to the first occupied cell."""
    out = _kernels.cast_rays(grid.occupied_mask(), grid.origin.x, grid.origin.y, grid.resolution,
                             origin.x, origin.y, np.array([float(angle)]), float(max_range))
    return float(out[0])


def simulate_scan(grid: OccupancyGrid, pose: Pose, cfg: LidarConfig,
                  rng: np.random.Generator | None = None, occ: np.ndarray | None = None) -> LaserScan:
    """Noisy lidar scan from ``pose``.

    ``occ`` may carry a precomputed :meth:`OccupancyGrid.occupied_mask`.
    Gaussian range noise is drawn for every beam (even when zero) so the
    generator advances identically regardless of configuration.
    """
    angles = cfg.beam_angles()
    if occ is None:
        occ = grid.occupied_mask()
    world = np.ascontiguousarray(pose.theta + angles)
    ranges = _kernels.cast_rays(occ, grid.origin.x, grid.origin.y, grid.resolution,
                                pose.x, pose.y, world, cfg.max_range)
    if rng is not None:
        noise = rng.standard_normal(len(angles))
        if cfg.range_noise_std > 0:
            hit = ranges < cfg.max_range
            ranges = np.where(hit, ranges + cfg.range_noise_std * noise, ranges)
            ranges = np.clip(ranges, 0.0, cfg.max_range)
    return LaserScan(angles, ranges, cfg.max_range)


def step_sim(state: SimState, cmd: Twist, params: KinematicParams, noise: NoiseModel,
             rng: np.random.Generator) -> tuple[SimState, Twist, float]:
    """Advance the true robot by one cycle and emit odometry and gyro readings.

    Returns ``(next_state, odom_twist, gyro_rate)``. The odometry twist is
    integrated into ``odom_pose`` (dead reckoning).
    """
    n = rng.standard_normal(4)
    v_meas = cmd.v * (1.0 + noise.odom_v_std * n[0])
    w_meas = cmd.w * (1.0 + noise.odom_w_std * n[1]) + noise.rotation_vibration_std * abs(cmd.w) * n[2]
    gyro = cmd.w + noise.gyro_std * n[3]
    odom = Twist(v_meas, w_meas)
    nxt = SimState(
        true_pose=step_euler(state.true_pose, cmd, params.dt),
        true_twist=cmd,
        odom_pose=step_euler(state.odom_pose, odom, params.dt),
        time=state.time + params.dt,
    )
    return nxt, odom, gyro


def footprint_collides(grid: OccupancyGrid, pose: Pose, radius: float, occ: np.ndarray | None = None) -> bool:
    """True when the disc of ``radius`` at ``pose`` overlaps an occupied cell square."""
    if occ is None:
        occ = grid.occupied_mask()
    res = grid.resolution
    c0, r0 = grid.world_to_cell(pose.x - radius, pose.y - radius)
    c1, r1 = grid.world_to_cell(pose.x + radius, pose.y + radius)
    c0, r0 = max(c0, 0), max(r0, 0)
    c1, r1 = min(c1, grid.width - 1), min(r1, grid.height - 1)
    if c0 > c1 or r0 > r1:
        return False
    block = occ[r0:r1 + 1, c0:c1 + 1]
    if not block.any():
        return False
    rows, cols = np.nonzero(block)
    x0 = grid.origin.x + (cols + c0) * res
    y0 = grid.origin.y + (rows + r0) * res
    nx = np.clip(pose.x, x0, x0 + res)
    ny = np.clip(pose.y, y0, y0 + res)
    return bool(np.any((nx - pose.x) ** 2 + (ny - pose.y) ** 2 <= radius * radius))


class ScenarioName(str, enum.Enum):
    OBSTACLE_FIELD = "obstacle_field"
    CORNER = "corner"
    STRAIGHT_OBSTACLE = "straight_obstacle"

    @classmethod
    def parse(cls, name) -> "ScenarioName":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"obstaclefield": "obstacle_field", "straightobstacle": "straight_obstacle"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown scenario {name!r}; expected one of {valid}") from None


class Scenario(NamedTuple):
    """Ground truth ``grid`` plus the ``prior`` map the robot navigates with.

    ``prior`` is ``None`` when the robot's map matches the world. With
    ``reveal_distance`` set, the cells occupied in ``grid`` but not in
    ``prior`` only enter the world once the robot centre comes that close to
    them; until then the world equals the prior.
    """

    grid: OccupancyGrid
    start: Pose
    goal: Pose
    prior: OccupancyGrid | None = None
    reveal_distance: float | None = None

    @property
    def known_map(self) -> OccupancyGrid:
        return self.grid if self.prior is None else self.prior

    def hidden_cells(self) -> np.ndarray:
        """(N, 2) world centres of the cells missing from the prior."""
        if self.prior is None:
            return np.zeros((0, 2))
        rows, cols = np.nonzero(self.grid.occupied_mask().astype(bool) & ~self.prior.occupied_mask().astype(bool))
        res = self.grid.resolution
        return np.column_stack([self.grid.origin.x + (cols + 0.5) * res, self.grid.origin.y + (rows + 0.5) * res])


SCENARIO_RESOLUTION = 0.05


def _obstacle_field() -> Scenario:
    g = OccupancyGrid.empty(10.0, 10.0, SCENARIO_RESOLUTION)
    g.fill_rect(0.0, 0.0, 10.0, 0.1)
    g.fill_rect(0.0, 9.9, 10.0, 10.0)
    g.fill_rect(0.0, 0.0, 0.1, 10.0)
    g.fill_rect(9.9, 0.0, 10.0, 10.0)
    g.fill_rect(2.5, 1.8, 3.5, 3.2)
    g.fill_disc(5.0, 5.0, 0.7)
    g.fill_rect(6.5, 3.0, 7.5, 4.0)
    g.fill_disc(4.0, 7.5, 0.6)
    return Scenario(g, Pose(1.0, 1.0, math.pi / 4), Pose(9.0, 9.0, math.pi / 4))


def _corner() -> Scenario:
    g = OccupancyGrid.empty(7.0, 7.0, SCENARIO_RESOLUTION, fill=OCCUPIED)
    g.fill_rect(0.5, 0.5, 5.7, 1.7, value=0.0)
    g.fill_rect(4.5, 0.5, 5.7, 6.5, value=0.0)
    return Scenario(g, Pose(1.1, 1.1, 0.0), Pose(5.1, 5.9, math.pi / 2))


def _straight_obstacle() -> Scenario:
    prior = OccupancyGrid.empty(9.0, 3.4, SCENARIO_RESOLUTION, fill=OCCUPIED)
    prior.fill_rect(0.5, 0.5, 8.5, 2.9, value=0.0)
    g = prior.copy()
    g.fill_rect(4.25, 1.45, 4.75, 1.95)
    return Scenario(g, Pose(1.0, 1.7, 0.0), Pose(8.0, 1.7, 0.0), prior)


_BUILDERS = {
    ScenarioName.OBSTACLE_FIELD: _obstacle_field,
    ScenarioName.CORNER: _corner,
    ScenarioName.STRAIGHT_OBSTACLE: _straight_obstacle,
}


def builtin_scenario(name) -> Scenario:
    """Ground-truth map, start and goal of a named scenario.

    * ``obstacle_field``: 10 x 10 m walled room with four convex obstacles.
    * ``corner``: 1.2 m wide L-shaped corridor with one 90 degree bend.
    * ``straight_obstacle``: 8 m straight corridor, 0.5 m block on the
      centre line half-way along. The block was placed after mapping, so it
      is missing from the prior map and only the lidar reveals it.
    """
    return _BUILDERS[ScenarioName.parse(name)]()

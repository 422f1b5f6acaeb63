"""Rao-Blackwellised particle-filter occupancy mapping.

Each particle owns a pose hypothesis and a private log-odds map. Per step the
particles are moved with noisy odometry, weighted by a likelihood-field score
of the scan against their own map, resampled when the effective sample size
drops, and finally every particle integrates the scan into its map. The output
is the best particle's map.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .ekf import EkfConfig, EkfState, PoseFilter
from .grid import OccupancyGrid
from .kinematics import KinematicParams, Pose, Twist, step_euler
from .sim_world import (LaserScan, LidarConfig, NoiseModel, SimState, footprint_collides,
                        simulate_scan, step_sim)

log = logging.getLogger(__name__)

MISS_PROBABILITY = 1e-3


class CollisionError(RuntimeError):
    """The driven robot touched an obstacle; carries the step and pose."""

    def __init__(self, step: int, pose: Pose):
        super().__init__(f"collision at step {step}: pose ({pose.x:.3f}, {pose.y:.3f}, {pose.theta:.3f})")
        self.step = step
        self.pose = pose


@dataclass(frozen=True)
class MappingConfig:
    num_particles: int = 30
    motion_noise: tuple[float, float] = (0.05, 0.1)
    hit_sigma: float = 0.1
    resample_neff_frac: float = 0.5
    l_occ: float = 0.85
    l_free: float = -0.4
    l_max: float = 5.0
    distance_refresh: int = 5
    hit_depth_cells: float = 0.5
    use_ekf: bool = True

    def __post_init__(self):
        if self.num_particles < 1 or self.hit_sigma <= 0:
            raise ValueError("num_particles must be >= 1 and hit_sigma > 0")
        if not 0 < self.resample_neff_frac <= 1:
            raise ValueError("resample_neff_frac must lie in (0, 1]")
        if self.distance_refresh < 1:
            raise ValueError("distance_refresh must be >= 1")


class LogOddsGrid:
    """Log-odds occupancy map with a lazily refreshed distance field."""

    def __init__(self, width: int, height: int, resolution: float, origin: Pose = Pose(),
                 l_max: float = 5.0):
        self.width = width
        self.height = height
        self.resolution = resolution
        self.origin = origin
        self.l_max = l_max
        self.logodds = np.zeros((height, width))
        self.observed = np.zeros((height, width), dtype=np.uint8)
        self._dist: np.ndarray | None = None
        self._since_refresh = 0

    @classmethod
    def like(cls, grid: OccupancyGrid, l_max: float = 5.0) -> "LogOddsGrid":
        return cls(grid.width, grid.height, grid.resolution, grid.origin, l_max)

    @classmethod
    def from_prior(cls, grid: OccupancyGrid, confidence: float = 2.0, l_max: float = 5.0) -> "LogOddsGrid":
        """Seed from a known map: occupied cells at ``+confidence``, free at ``-confidence``."""
        m = cls.like(grid, l_max)
        known = ~np.isnan(grid.data)
        occ = grid.occupied_mask().astype(bool)
        m.logodds[known & occ] = confidence
        m.logodds[known & ~occ] = -confidence
        m.observed[known] = 1
        return m

    def copy(self) -> "LogOddsGrid":
        out = LogOddsGrid.__new__(LogOddsGrid)
        out.__dict__.update(self.__dict__)
        out.logodds = self.logodds.copy()
        out.observed = self.observed.copy()
        # the cached field is read-only, sharing it is safe
        return out

    def contains(self, pose: Pose) -> bool:
        col = math.floor((pose.x - self.origin.x) / self.resolution)
        row = math.floor((pose.y - self.origin.y) / self.resolution)
        return 0 <= col < self.width and 0 <= row < self.height

    def probability(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logodds))

    def distance_field(self, refresh_every: int = 1) -> np.ndarray:
        """Metric distance to the nearest occupied (p > 0.5) cell."""
        if self._dist is None or self._since_refresh >= refresh_every:
            occ = np.ascontiguousarray(self.logodds > 0.0, dtype=np.uint8)
            self._dist = _kernels.distance_field(occ) * self.resolution
            self._since_refresh = 0
        return self._dist

    def to_occupancy(self) -> OccupancyGrid:
        """Threshold at p = 0.5; never-observed cells become unknown."""
        data = np.where(self.logodds > 0.0, 1.0, 0.0)
        data[self.observed == 0] = np.nan
        return OccupancyGrid(self.width, self.height, self.resolution, self.origin, data)


@dataclass
class Particle:
    pose: Pose
    weight: float
    map: LogOddsGrid


def motion_update(particles: Sequence[Particle], odom_delta: Twist, dt: float, cfg: MappingConfig,
                  rng: np.random.Generator) -> list[Particle]:
    """Sample each particle's next pose from the noisy odometry model.

    Noise standard deviations scale with the distance travelled and the angle
    turned during the step.
    """
    trans_std, rot_std = cfg.motion_noise
    noise = rng.standard_normal((len(particles), 2))
    ds = odom_delta.v * dt
    dth = odom_delta.w * dt
    out = []
    for p, (n_t, n_r) in zip(particles, noise):
        s = ds + trans_std * abs(ds) * n_t
        th = dth + rot_std * abs(dth) * n_r
        out.append(Particle(step_euler(p.pose, Twist(s / dt, th / dt), dt), p.weight, p.map))
    return out


def scan_likelihood(m: LogOddsGrid, pose: Pose, scan: LaserScan, cfg: MappingConfig) -> float:
    """Geometric-mean per-beam likelihood-field score in ``[floor, 1]``."""
    if not m.contains(pose):
        return MISS_PROBABILITY
    dist = m.distance_field(cfg.distance_refresh)
    return _kernels.endpoint_likelihood(
        dist, m.origin.x, m.origin.y, m.resolution, pose.x, pose.y, pose.theta,
        np.ascontiguousarray(scan.angles, dtype=np.float64),
        np.ascontiguousarray(scan.ranges, dtype=np.float64),
        scan.max_range, cfg.hit_sigma, MISS_PROBABILITY)


def normalize_weights(particles: Sequence[Particle]) -> list[Particle]:
    w = np.array([p.weight for p in particles], dtype=float)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        log.warning("degenerate particle weights; resetting to uniform")
        w = np.full(len(particles), 1.0 / len(particles))
    else:
        w = w / total
    for p, wi in zip(particles, w):
        p.weight = float(wi)
    return list(particles)


def measurement_update(particles: Sequence[Particle], scan: LaserScan, cfg: MappingConfig) -> list[Particle]:
    scores = [scan_likelihood(p.map, p.pose, scan, cfg) for p in particles]
    out = [Particle(p.pose, p.weight * s, p.map) for p, s in zip(particles, scores)]
    return normalize_weights(out)


def effective_sample_size(particles: Sequence[Particle]) -> float:
    w = np.array([p.weight for p in particles])
    return 1.0 / float(np.sum(w * w))


def systematic_indices(weights: np.ndarray, u: float) -> np.ndarray:
    """Systematic resampling comb for a single uniform draw ``u`` in [0, 1)."""
    n = len(weights)
    positions = (u + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.minimum(np.searchsorted(cumulative, positions, side="right"), n - 1)


def resample_if_needed(particles: Sequence[Particle], cfg: MappingConfig,
                       rng: np.random.Generator) -> list[Particle]:
    n = len(particles)
    if effective_sample_size(particles) >= cfg.resample_neff_frac * n:
        return list(particles)
    weights = np.array([p.weight for p in particles])
    idx = systematic_indices(weights, float(rng.random()))
    used = set()
    out = []
    for i in idx:
        src = particles[i]
        m = src.map if i not in used else src.map.copy()
        used.add(i)
        out.append(Particle(src.pose, 1.0 / n, m))
    return out


def integrate_scan(m: LogOddsGrid, pose: Pose, scan: LaserScan, cfg: MappingConfig) -> LogOddsGrid:
    """Ray-trace the scan into the map in place and return it."""
    _kernels.integrate_rays(
        m.logodds, m.observed, m.origin.x, m.origin.y, m.resolution, pose.x, pose.y,
        np.ascontiguousarray(pose.theta + scan.angles, dtype=np.float64),
        np.ascontiguousarray(scan.ranges, dtype=np.float64),
        scan.max_range, cfg.l_free, cfg.l_occ, cfg.l_max, cfg.hit_depth_cells * m.resolution)
    m._since_refresh += 1
    return m


def best_particle(particles: Sequence[Particle]) -> Particle:
    # first index wins ties
    return max(particles, key=lambda p: p.weight)


# -- full loop ---------------------------------------------------------------

@dataclass(frozen=True)
class ScanLogStep:
    odom: Twist
    gyro: float
    ranges: np.ndarray


@dataclass
class ScanLog:
    """Recorded drive: per-step odometry twist, gyro rate and lidar ranges.

    Step 0 carries the scan taken at the start pose with zero motion.
    """

    dt: float
    lidar: LidarConfig
    start: Pose
    steps: list[ScanLogStep] = field(default_factory=list)
    true_poses: list[Pose] = field(default_factory=list)


def save_scan_log(log_: ScanLog, path) -> None:
    lines = [
        "# diffnav scan log: v w gyro range_0 ... range_n-1",
        f"# dt {log_.dt!r}",
        f"# lidar {log_.lidar.num_beams} {log_.lidar.fov!r} {log_.lidar.max_range!r} {log_.lidar.range_noise_std!r}",
        f"# start {log_.start.x!r} {log_.start.y!r} {log_.start.theta!r}",
    ]
    for s in log_.steps:
        lines.append(" ".join(repr(float(v)) for v in (s.odom.v, s.odom.w, s.gyro, *s.ranges)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_scan_log(path) -> ScanLog:
    dt = lidar = start = None
    steps = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "dt":
                dt = float(parts[1])
            elif parts and parts[0] == "lidar":
                lidar = LidarConfig(int(parts[1]), float(parts[2]), float(parts[3]), float(parts[4]))
            elif parts and parts[0] == "start":
                start = Pose(*(float(v) for v in parts[1:4]))
            continue
        vals = [float(v) for v in line.split()]
        steps.append(ScanLogStep(Twist(vals[0], vals[1]), vals[2], np.array(vals[3:])))
    if dt is None or lidar is None or start is None:
        raise ValueError(f"scan log {path} is missing its dt/lidar/start header")
    for s in steps:
        if len(s.ranges) != lidar.num_beams:
            raise ValueError(f"scan log {path}: expected {lidar.num_beams} ranges per line")
    return ScanLog(dt, lidar, start, steps)


def record_drive(world: OccupancyGrid, start: Pose, commands: Iterable[Twist], params: KinematicParams,
                 noise: NoiseModel, lidar: LidarConfig, rng: np.random.Generator,
                 robot_radius: float = 0.2) -> ScanLog:
    """Drive the simulator through ``commands`` and record the sensor stream."""
    occ = world.occupied_mask()
    state = SimState(start)
    out = ScanLog(params.dt, lidar, start)
    out.true_poses.append(start)
    scan = simulate_scan(world, start, lidar, rng, occ)
    out.steps.append(ScanLogStep(Twist(), 0.0, scan.ranges))
    for k, cmd in enumerate(commands, start=1):
        state, odom, gyro = step_sim(state, cmd, params, noise, rng)
        if footprint_collides(world, state.true_pose, robot_radius, occ):
            raise CollisionError(k, state.true_pose)
        scan = simulate_scan(world, state.true_pose, lidar, rng, occ)
        out.steps.append(ScanLogStep(odom, gyro, scan.ranges))
        out.true_poses.append(state.true_pose)
    return out


class GridMapper:
    """Stateful particle-filter mapper consuming one log step at a time."""

    def __init__(self, template: OccupancyGrid, start: Pose, cfg: MappingConfig,
                 rng: np.random.Generator, ekf_cfg: EkfConfig | None = None):
        self.cfg = cfg
        self.rng = rng
        n = cfg.num_particles
        self.particles = [Particle(start, 1.0 / n, LogOddsGrid.like(template, cfg.l_max)) for _ in range(n)]
        self.ekf = PoseFilter(ekf_cfg or EkfConfig(), EkfState.initial(start)) if cfg.use_ekf else None
        self.steps = 0
        self.resamples = 0

    def process(self, step: ScanLogStep, dt: float, angles: np.ndarray, max_range: float) -> None:
        scan = LaserScan(angles, step.ranges, max_range)
        if self.steps > 0:
            delta = step.odom
            if self.ekf is not None:
                self.ekf.step(step.odom, step.gyro, dt)
                delta = self.ekf.state.twist
            self.particles = motion_update(self.particles, delta, dt, self.cfg, self.rng)
            self.particles = measurement_update(self.particles, scan, self.cfg)
            if effective_sample_size(self.particles) < self.cfg.resample_neff_frac * len(self.particles):
                self.resamples += 1
            self.particles = resample_if_needed(self.particles, self.cfg, self.rng)
        for p in self.particles:
            integrate_scan(p.map, p.pose, scan, self.cfg)
        self.steps += 1

    def best(self) -> Particle:
        return best_particle(self.particles)


def replay_scan_log(log_: ScanLog, template: OccupancyGrid, cfg: MappingConfig,
                    rng: np.random.Generator, ekf_cfg: EkfConfig | None = None) -> GridMapper:
    mapper = GridMapper(template, log_.start, cfg, rng, ekf_cfg)
    angles = log_.lidar.beam_angles()
    for step in log_.steps:
        mapper.process(step, log_.dt, angles, log_.lidar.max_range)
    return mapper


def run_mapping(world: OccupancyGrid, commands: Sequence[Twist], cfg: MappingConfig,
                rng: np.random.Generator, start: Pose | None = None,
                params: KinematicParams = KinematicParams(), noise: NoiseModel = NoiseModel(),
                lidar: LidarConfig = LidarConfig(), robot_radius: float = 0.2) -> OccupancyGrid:
    """Drive, map with the particle filter, return the best particle's map.

    Raises :class:`CollisionError` if the commanded drive hits an obstacle.
    """
    if start is None:
        raise ValueError("start pose required")
    drive = record_drive(world, start, commands, params, noise, lidar, rng, robot_radius)
    ekf_cfg = EkfConfig.from_noise(noise)
    mapper = replay_scan_log(drive, world, cfg, rng, ekf_cfg)
    return mapper.best().map.to_occupancy()


def map_agreement(estimate: OccupancyGrid, truth: OccupancyGrid) -> float:
    """Fraction of observed (non-unknown) cells whose free/occupied state matches."""
    if estimate.data.shape != truth.data.shape:
        raise ValueError("maps differ in geometry")
    observed = ~np.isnan(estimate.data)
    if not observed.any():
        return 0.0
    est_occ = estimate.data[observed] >= 0.5
    true_occ = np.nan_to_num(truth.data[observed], nan=0.0) >= 0.5
    return float(np.mean(est_occ == true_occ))


def loop_drive_commands(side: float = 7.6, speed: float = 0.5, turn_time: float = 3.0,
                        dt: float = 0.1, laps: int = 1) -> list[Twist]:
    """Counter-clockwise square loop: straight ``side`` metres, 90 degree turn in place."""
    n_straight = int(round(side / (speed * dt)))
    n_turn = int(round(turn_time / dt))
    w = (math.pi / 2) / (n_turn * dt)
    cmds: list[Twist] = []
    for lap in range(laps):
        for edge in range(4):
            cmds.extend([Twist(speed, 0.0)] * n_straight)
            if lap < laps - 1 or edge < 3:
                cmds.extend([Twist(0.0, w)] * n_turn)
    return cmds

"""Closed-loop navigation runs and the DWA/MPC comparison.

One cycle: lidar scan at the true pose, local costmap around the estimated
pose, periodic global costmap refresh and A* replan, local planner, wheel
limit clamp, simulated motion, EKF update, collision check.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .costmap import INSCRIBED, LETHAL, CostMap, InflationConfig, LocalWindow, from_occupancy, inflate
from .dwa import DwaConfig, dwa_plan
from .ekf import EkfConfig, EkfState, PoseFilter
from .global_planner import GridPath, Unreachable, astar, nearest_free_cell, path_cost, path_is_clear
from .grid import OccupancyGrid, load_map
from .kinematics import KinematicParams, Pose, Twist, clamp_twist, normalize_angle, within_wheel_limits
from .mapping import LogOddsGrid, MappingConfig, integrate_scan, loop_drive_commands, map_agreement, run_mapping
from .mpc import MpcConfig, mpc_plan
from .paths import distance_to_polyline, nearest_index, path_xy, smooth_clear_path
from .sim_world import (LidarConfig, NoiseModel, Scenario, ScenarioName, SimState, builtin_scenario,
                        footprint_collides, make_rng, simulate_scan, step_sim)

RECORD_COLUMNS = ("time", "true_x", "true_y", "true_theta", "est_x", "est_y", "est_theta",
                  "v", "w", "score", "blocked")

DEFAULT_MAX_TIME = {
    ScenarioName.STRAIGHT_OBSTACLE: 20.0,
    ScenarioName.CORNER: 40.0,
    ScenarioName.OBSTACLE_FIELD: 60.0,
}


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"
    BLOCKED = "blocked"
    UNREACHABLE = "unreachable"


class Planner(str, enum.Enum):
    DWA = "dwa"
    MPC = "mpc"


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines a run.

    ``scenario`` names a built-in world; ``map_file`` loads a saved map instead
    and then ``start``/``goal`` are required. ``max_time`` defaults per
    scenario. ``global_every`` is the slow update period (cycles) of the
    global costmap and the periodic A* replan; a replanned path replaces a
    still-clear one only when it is cheaper by more than ``replan_hysteresis``
    (a fraction of the remaining cost). The global costmap is derived from a
    running occupancy map: the prior map seeded at ``prior_confidence``
    log-odds and updated with every scan at the estimated pose. DWA aims at
    the grid path itself; MPC tracks it after smoothing with a moving average
    ``path_smoothing`` metres wide. ``reveal_distance`` overrides the
    scenario's pop-up distance for obstacles missing from the prior map.
    """

    scenario: str = "straight_obstacle"
    planner: str = "mpc"
    seed: int = 0
    map_file: str | None = None
    start: tuple[float, float, float] | None = None
    goal: tuple[float, float, float] | None = None
    cycle_dt: float = 0.1
    max_time: float | None = None
    goal_tolerance: tuple[float, float] = (0.2, math.pi)
    robot_radius: float = 0.2
    blocked_timeout: float = 3.0
    global_every: int = 20
    replan_hysteresis: float = 0.05
    local_size: float = 5.0
    unknown_lethal: bool = False
    path_smoothing: float = 2.0
    prior_confidence: float = 2.0
    reveal_distance: float | None = None
    kinematics: KinematicParams = field(default_factory=KinematicParams)
    noise: NoiseModel = field(default_factory=NoiseModel)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    ekf: EkfConfig | None = None
    costmap: InflationConfig = field(default_factory=InflationConfig)
    dwa: DwaConfig = field(default_factory=DwaConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    mapping: MappingConfig = field(default_factory=MappingConfig)

    def __post_init__(self):
        Planner(self.planner)
        if self.map_file is None:
            object.__setattr__(self, "scenario", ScenarioName.parse(self.scenario).value)
        elif self.start is None or self.goal is None:
            raise ValueError("a map file needs explicit start and goal poses")
        if self.max_time is not None and self.max_time <= 0:
            raise ValueError("max_time must be positive")
        if self.cycle_dt <= 0 or min(self.goal_tolerance) <= 0 or self.global_every < 1:
            raise ValueError("cycle_dt, goal tolerances and global_every must be positive")
        if self.blocked_timeout <= 0 or self.robot_radius <= 0 or self.local_size <= 0:
            raise ValueError("blocked_timeout, robot_radius and local_size must be positive")
        if abs(self.kinematics.dt - self.cycle_dt) > 1e-12:
            object.__setattr__(self, "kinematics", replace(self.kinematics, dt=self.cycle_dt))

    def resolved_max_time(self) -> float:
        if self.max_time is not None:
            return self.max_time
        if self.map_file is not None:
            return 60.0
        return DEFAULT_MAX_TIME[ScenarioName(self.scenario)]

    def world(self) -> tuple[OccupancyGrid, Pose, Pose]:
        sc = self.load()
        return sc.grid, sc.start, sc.goal

    def load(self) -> Scenario:
        """Ground truth, start, goal and prior map after applying overrides."""
        if self.map_file is not None:
            sc = Scenario(load_map(self.map_file), None, None)
        else:
            sc = builtin_scenario(self.scenario)
        if self.start is not None:
            sc = sc._replace(start=Pose(*self.start))
        if self.goal is not None:
            sc = sc._replace(goal=Pose(*self.goal))
        if self.reveal_distance is not None:
            sc = sc._replace(reveal_distance=self.reveal_distance)
        return sc

    def ekf_config(self) -> EkfConfig:
        return self.ekf if self.ekf is not None else EkfConfig.from_noise(self.noise)


@dataclass(frozen=True)
class RunRow:
    time: float
    true_pose: Pose
    est_pose: Pose
    command: Twist
    score: float
    blocked: bool

    def values(self) -> tuple:
        t, e = self.true_pose, self.est_pose
        return (self.time, t.x, t.y, t.theta, e.x, e.y, e.theta, self.command.v, self.command.w,
                self.score, int(self.blocked))


@dataclass
class RunRecord:
    config: ScenarioConfig
    rows: list[RunRow]
    outcome: Outcome
    path: GridPath | None
    planning_times: list[float] = field(default_factory=list)
    limit_violations: int = 0
    lethal_contacts: int = 0
    message: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for row in self.rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row.values()])
        return buf.getvalue()

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "record.csv").write_text(self.to_csv())
        metrics = compute_metrics(self, self.path)
        (out / "metrics.json").write_text(json.dumps(metrics.as_dict(), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class Metrics:
    success: bool
    outcome: str
    time_to_goal: float
    path_length: float
    tracking_rmse: float
    w_std: float
    w_min: float
    w_max: float
    v_std: float
    mean_planning_ms: float
    min_clearance: float

    def as_dict(self) -> dict:
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else None) for k, v in asdict(self).items()}


def _goal_reached(pose: Pose, goal: Pose, tol: tuple[float, float]) -> bool:
    return (math.hypot(pose.x - goal.x, pose.y - goal.y) <= tol[0]
            and abs(normalize_angle(pose.theta - goal.theta)) <= tol[1])


def _plan_global(cm: CostMap, pose: Pose, goal: Pose) -> GridPath:
    col, row = cm.world_to_cell(pose.x, pose.y)
    if cm.in_bounds(col, row) and cm.cost[row, col] >= INSCRIBED:
        # start from the closest free cell when the estimate sits in the inscribed band
        return astar(cm, nearest_free_cell(cm, col, row), goal)
    return astar(cm, pose, goal)


def _should_switch(old: GridPath, fresh: GridPath, cm: CostMap, pose: Pose, hysteresis: float) -> bool:
    """Adopt a replanned path only if the current one is blocked or clearly costlier.

    Switching between equally good paths would make the local reference jump.
    """
    if not path_is_clear(old, cm):
        return True
    i = nearest_index(path_xy(old.world_poses), pose.x, pose.y)
    remaining = path_cost(old.cells[i:], cm)
    return fresh.total_cost < (1.0 - hysteresis) * remaining


def _touches_lethal(traj, cm: CostMap) -> bool:
    if traj is None:
        return False
    arr = traj.as_array()
    return bool((cm.costs_at(arr[:, 0], arr[:, 1]) == LETHAL).any())


def run_scenario(cfg: ScenarioConfig) -> RunRecord:
    """Run one closed-loop navigation episode; fully determined by ``cfg``."""
    sc = cfg.load()
    start, goal, known = sc.start, sc.goal, sc.known_map
    hidden = sc.hidden_cells() if sc.reveal_distance is not None else np.zeros((0, 2))
    world = known if len(hidden) else sc.grid
    params = cfg.kinematics
    dt = cfg.cycle_dt
    occ = world.occupied_mask()
    scan_rng = make_rng(cfg.seed, 0)
    motion_rng = make_rng(cfg.seed, 1)
    planner = Planner(cfg.planner)

    if _goal_reached(start, goal, cfg.goal_tolerance):
        return RunRecord(cfg, [], Outcome.SUCCESS, None, message="start already within goal tolerance")

    # running map: the prior updated with every scan at the estimated pose
    belief = LogOddsGrid.from_prior(known, cfg.prior_confidence, cfg.mapping.l_max)

    def global_costmap(stamp: int) -> CostMap:
        return inflate(from_occupancy(belief.to_occupancy(), unknown_lethal=cfg.unknown_lethal, stamp=stamp),
                       cfg.costmap)

    global_cm = global_costmap(0)
    try:
        path = _plan_global(global_cm, start, goal)
    except Unreachable as exc:
        return RunRecord(cfg, [], Outcome.UNREACHABLE, None, message=str(exc))
    initial_path = path
    mpc_reference = smooth_clear_path(path.world_poses, global_cm, global_cm.resolution, cfg.path_smoothing)

    state = SimState(start)
    ekf = PoseFilter(cfg.ekf_config(), EkfState.initial(start))
    est = start
    window = LocalWindow(cfg.local_size, cfg.costmap)
    last_cmd = Twist()
    rows: list[RunRow] = []
    times: list[float] = []
    violations = contacts = 0
    blocked_for = 0.0
    max_steps = int(round(cfg.resolved_max_time() / dt))
    outcome = Outcome.TIMEOUT

    for step in range(max_steps):
        if _goal_reached(est, goal, cfg.goal_tolerance):
            outcome = Outcome.SUCCESS
            break
        if len(hidden):
            p = state.true_pose
            if np.hypot(hidden[:, 0] - p.x, hidden[:, 1] - p.y).min() <= sc.reveal_distance:
                world, occ, hidden = sc.grid, sc.grid.occupied_mask(), hidden[:0]
        scan = simulate_scan(world, state.true_pose, cfg.lidar, scan_rng, occ)
        t0 = time.perf_counter()
        local_cm = window.update(global_cm, est, scan)
        integrate_scan(belief, est, scan, cfg.mapping)
        if step > 0 and step % cfg.global_every == 0:
            global_cm = global_costmap(step)
        if step > 0 and (step % cfg.global_every == 0 or not path_is_clear(path, global_cm)):
            try:
                fresh = _plan_global(global_cm, est, goal)
            except Unreachable:
                fresh = None
            if fresh is not None and _should_switch(path, fresh, global_cm, est, cfg.replan_hysteresis):
                path = fresh
                mpc_reference = smooth_clear_path(path.world_poses, global_cm, global_cm.resolution, cfg.path_smoothing)
        if planner is Planner.DWA:
            plan = dwa_plan(est, last_cmd, path, local_cm, cfg.dwa, params, dt)
        else:
            plan = mpc_plan(est, last_cmd, mpc_reference, local_cm, cfg.mpc, params, dt,
                            inflation_radius=cfg.costmap.inflation_radius)
        times.append(time.perf_counter() - t0)
        cmd = clamp_twist(plan.command, params)
        if not within_wheel_limits(cmd, params):
            violations += 1
        if not plan.blocked and _touches_lethal(plan.trajectory, local_cm):
            contacts += 1
        state, odom, gyro = step_sim(state, cmd, params, cfg.noise, motion_rng)
        est = ekf.step(odom, gyro, dt)
        last_cmd = cmd
        rows.append(RunRow(round((step + 1) * dt, 10), state.true_pose, est, cmd, float(plan.score), plan.blocked))
        if footprint_collides(world, state.true_pose, cfg.robot_radius, occ):
            outcome = Outcome.COLLISION
            break
        blocked_for = blocked_for + dt if plan.blocked else 0.0
        if blocked_for > cfg.blocked_timeout + 1e-9:
            outcome = Outcome.BLOCKED
            break
    else:
        if _goal_reached(est, goal, cfg.goal_tolerance):
            outcome = Outcome.SUCCESS

    return RunRecord(cfg, rows, outcome, initial_path, times, violations, contacts)


def _min_clearance(world: OccupancyGrid, poses: np.ndarray) -> float:
    """Smallest distance from any recorded centre to an occupied cell square."""
    occ = np.argwhere(world.occupied_mask().astype(bool))
    if occ.size == 0 or poses.size == 0:
        return math.inf
    res = world.resolution
    x0 = world.origin.x + occ[:, 1] * res
    y0 = world.origin.y + occ[:, 0] * res
    best = math.inf
    for px, py in poses:
        nx = np.clip(px, x0, x0 + res)
        ny = np.clip(py, y0, y0 + res)
        best = min(best, float(np.sqrt(((nx - px) ** 2 + (ny - py) ** 2).min())))
    return best


def compute_metrics(rec: RunRecord, path: GridPath | None = None) -> Metrics:
    """Summary statistics of a run (population standard deviations)."""
    path = rec.path if path is None else path
    success = rec.outcome is Outcome.SUCCESS
    if not rec.rows:
        return Metrics(success, rec.outcome.value, 0.0 if success else math.nan, 0.0, 0.0 if success else math.nan,
                       0.0, 0.0, 0.0, 0.0, 0.0, math.inf)
    v = np.array([r.command.v for r in rec.rows])
    w = np.array([r.command.w for r in rec.rows])
    true_xy = np.array([[r.true_pose.x, r.true_pose.y] for r in rec.rows])
    start = rec.config.world()[1]
    pts = np.vstack([[start.x, start.y], true_xy])
    path_length = float(np.hypot(*np.diff(pts, axis=0).T).sum())
    if path is not None:
        est = np.array([[r.est_pose.x, r.est_pose.y] for r in rec.rows])
        d = distance_to_polyline(path_xy(path.world_poses), est[:, 0], est[:, 1])
        rmse = float(np.sqrt(np.mean(d ** 2)))
    else:
        rmse = math.nan
    world = rec.config.world()[0]
    return Metrics(
        success=success,
        outcome=rec.outcome.value,
        time_to_goal=rec.rows[-1].time if success else math.nan,
        path_length=path_length,
        tracking_rmse=rmse,
        w_std=float(w.std()),
        w_min=float(w.min()),
        w_max=float(w.max()),
        v_std=float(v.std()),
        mean_planning_ms=1000.0 * float(np.mean(rec.planning_times)) if rec.planning_times else 0.0,
        min_clearance=_min_clearance(world, true_xy),
    )


@dataclass(frozen=True)
class Comparison:
    """Side-by-side DWA and MPC metrics for one scenario and seed."""

    scenario: str
    seed: int
    dwa: Metrics
    mpc: Metrics

    @property
    def deltas(self) -> dict:
        keys = ("time_to_goal", "path_length", "tracking_rmse", "w_std", "w_min", "w_max", "v_std")
        return {k: getattr(self.mpc, k) - getattr(self.dwa, k) for k in keys}

    @property
    def verdicts(self) -> dict:
        return {
            "mpc_smoother": self.mpc.w_std < self.dwa.w_std,
            "mpc_tracks_better": self.mpc.tracking_rmse < self.dwa.tracking_rmse,
            "mpc_more_successful": self.mpc.success and not self.dwa.success,
        }


def compare(dwa: Metrics, mpc: Metrics, scenario: str = "", seed: int = 0,
            mpc_scenario: str | None = None) -> Comparison:
    if mpc_scenario is not None and mpc_scenario != scenario:
        raise ValueError(f"cannot compare runs of {scenario!r} and {mpc_scenario!r}")
    return Comparison(scenario, seed, dwa, mpc)


REPORT_COLUMNS = ("scenario", "seed", "planner", "outcome", "success", "time_to_goal", "path_length",
                  "tracking_rmse", "w_std", "w_min", "w_max", "v_std", "min_clearance")


def report_csv(comparisons) -> str:
    """Per-seed rows for both planners followed by summary counts."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for c in comparisons:
        for name, m in (("dwa", c.dwa), ("mpc", c.mpc)):
            writer.writerow([c.scenario, c.seed, name, m.outcome, int(m.success)]
                            + [repr(float(getattr(m, k))) for k in REPORT_COLUMNS[5:]])
    n = len(comparisons)
    writer.writerow([])
    writer.writerow(["summary", "runs", n])
    writer.writerow(["summary", "dwa_successes", sum(c.dwa.success for c in comparisons)])
    writer.writerow(["summary", "mpc_successes", sum(c.mpc.success for c in comparisons)])
    writer.writerow(["summary", "mpc_w_std_lower", sum(c.verdicts["mpc_smoother"] for c in comparisons)])
    writer.writerow(["summary", "mpc_rmse_lower", sum(c.verdicts["mpc_tracks_better"] for c in comparisons)])
    return buf.getvalue()


def run_pair(cfg: ScenarioConfig) -> tuple[RunRecord, RunRecord]:
    """The same scenario and seed under both planners (DWA first)."""
    dwa = run_scenario(replace(cfg, planner=Planner.DWA.value))
    mpc = run_scenario(replace(cfg, planner=Planner.MPC.value))
    return dwa, mpc


MAPPING_START = Pose(1.2, 1.2, 0.0)


@dataclass(frozen=True)
class MapResult:
    estimate: OccupancyGrid
    truth: OccupancyGrid
    agreement: float


def run_mapping_drive(cfg: ScenarioConfig, commands=None, start: Pose | None = None) -> MapResult:
    """Scripted drive through the configured world, mapped by the particle filter.

    Defaults to a square loop starting at ``cfg.start`` or :data:`MAPPING_START`.
    Raises :class:`~diffnav.mapping.CollisionError` if the drive hits something.
    """
    truth = cfg.load().grid
    if start is None:
        start = Pose(*cfg.start) if cfg.start is not None else MAPPING_START
    if commands is None:
        commands = loop_drive_commands(dt=cfg.cycle_dt)
    estimate = run_mapping(truth, commands, cfg.mapping, make_rng(cfg.seed, 2), start, cfg.kinematics,
                           cfg.noise, cfg.lidar, cfg.robot_radius)
    return MapResult(estimate, truth, map_agreement(estimate, truth))


def figure_eight_commands(speed: float = 0.5, radius: float = 1.0, dt: float = 0.1, laps: int = 1) -> list[Twist]:
    """A full circle to the left followed by a full circle to the right."""
    w = speed / radius
    n = int(round(2.0 * math.pi / w / dt))
    return ([Twist(speed, w)] * n + [Twist(speed, -w)] * n) * laps


@dataclass(frozen=True)
class DriftResult:
    """Position RMSE against ground truth of the filtered and the dead-reckoned pose."""

    ekf_rmse: float
    odom_rmse: float
    true_xy: np.ndarray
    ekf_xy: np.ndarray
    odom_xy: np.ndarray


def run_ekf_drive(cfg: ScenarioConfig, commands=None, start: Pose | None = None) -> DriftResult:
    """Open-loop drive (no map) scoring the EKF against plain odometry integration.

    Defaults to :func:`figure_eight_commands` from ``cfg.start`` or the origin.
    """
    if start is None:
        start = Pose(*cfg.start) if cfg.start is not None else Pose()
    if commands is None:
        commands = figure_eight_commands(dt=cfg.kinematics.dt)
    rng = make_rng(cfg.seed, 3)
    state = SimState(start)
    ekf = PoseFilter(cfg.ekf_config(), EkfState.initial(start))
    true_xy, ekf_xy, odom_xy = [], [], []
    for cmd in commands:
        state, odom, gyro = step_sim(state, cmd, cfg.kinematics, cfg.noise, rng)
        est = ekf.step(odom, gyro, cfg.kinematics.dt)
        true_xy.append((state.true_pose.x, state.true_pose.y))
        ekf_xy.append((est.x, est.y))
        odom_xy.append((state.odom_pose.x, state.odom_pose.y))
    t, e, o = (np.array(a, dtype=float).reshape(-1, 2) for a in (true_xy, ekf_xy, odom_xy))

    def rmse(a):
        return float(np.sqrt(np.mean(np.sum((a - t) ** 2, axis=1)))) if len(t) else 0.0

    return DriftResult(rmse(e), rmse(o), t, e, o)

"""Dynamic Window Approach local planner.

Every cycle a uniform grid of (v, w) commands reachable within one control
period is rolled out at constant velocity, scored on heading toward a
lookahead point of the global path, clearance from lethal cells and forward
speed, and the best feasible command is published.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .costmap import INSCRIBED, CostMap
from .kinematics import KinematicParams, Pose, Trajectory, Twist, clamp_twist, normalize_angles, rollout_batch
from .paths import LocalPlan, lookahead_index, path_poses, path_xy


@dataclass(frozen=True)
class DwaConfig:
    v_samples: int = 11
    w_samples: int = 21
    accel_v: float = 0.5
    accel_w: float = 8.0
    sim_time: float = 2.0
    sim_dt: float = 0.1
    weights: tuple[float, float, float] = (0.8, 0.2, 0.2)
    clearance_cap: float = 1.0
    lookahead: float = 1.0

    def __post_init__(self):
        if self.v_samples < 2 or self.w_samples < 2:
            raise ValueError("need at least 2 samples per axis")
        if not self.sim_time > self.sim_dt > 0:
            raise ValueError("need sim_time > sim_dt > 0")
        if len(self.weights) != 3 or min(self.weights) < 0 or sum(self.weights) <= 0:
            raise ValueError("weights must be three non-negative numbers, not all zero")
        if self.accel_v <= 0 or self.accel_w <= 0 or self.clearance_cap <= 0 or self.lookahead < 0:
            raise ValueError(f"invalid DWA config {self}")

    @property
    def sim_steps(self) -> int:
        return int(round(self.sim_time / self.sim_dt))


@dataclass(frozen=True)
class ScoredTrajectory:
    command: Twist
    trajectory: Trajectory
    heading_score: float
    clearance_score: float
    velocity_score: float
    total: float
    feasible: bool


def dynamic_window(current: Twist, cfg: DwaConfig, params: KinematicParams,
                   dt_cycle: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Velocities reachable from ``current`` within one cycle, inside the absolute limits."""
    v_lo = max(0.0, current.v - cfg.accel_v * dt_cycle)
    v_hi = min(params.v_max, current.v + cfg.accel_v * dt_cycle)
    w_lo = max(-params.w_max, current.w - cfg.accel_w * dt_cycle)
    w_hi = min(params.w_max, current.w + cfg.accel_w * dt_cycle)
    # a current command outside the limits collapses the window onto the limit
    v_lo, w_lo = min(v_lo, v_hi), min(w_lo, w_hi)
    return (v_lo, v_hi), (w_lo, w_hi)


def lookahead_target(xy: np.ndarray, x: float, y: float, distance: float, end_heading: float) -> tuple[float, float]:
    """Lookahead point on the path; near the end the path is extended straight past the goal.

    Without the extension the target collapses onto the goal and every
    rollout long enough to overshoot it scores badly, so the robot creeps in.
    """
    ext = np.vstack([xy, xy[-1] + distance * np.array([math.cos(end_heading), math.sin(end_heading)])])
    return tuple(float(c) for c in ext[lookahead_index(ext, x, y, distance)])


def _heading_scores(final: np.ndarray, target: tuple[float, float]) -> np.ndarray:
    bearing = np.arctan2(target[1] - final[:, 1], target[0] - final[:, 0])
    err = normalize_angles(bearing - final[:, 2])
    return 1.0 - np.abs(err) / math.pi


def _evaluate(rollouts: np.ndarray, v: np.ndarray, target, local_cm: CostMap, dist: np.ndarray,
              cfg: DwaConfig, params: KinematicParams):
    """Raw (heading, clearance, velocity, feasible) arrays for a batch of rollouts."""
    xs = rollouts[:, :, 0]
    ys = rollouts[:, :, 1]
    cols = np.floor((xs - local_cm.origin.x) / local_cm.resolution).astype(np.int64)
    rows = np.floor((ys - local_cm.origin.y) / local_cm.resolution).astype(np.int64)
    inside = (cols >= 0) & (cols < local_cm.width) & (rows >= 0) & (rows < local_cm.height)
    cc = np.clip(cols, 0, local_cm.width - 1)
    rr = np.clip(rows, 0, local_cm.height - 1)
    cost = np.where(inside, local_cm.cost[rr, cc], 0)
    clear = np.where(inside, dist[rr, cc], cfg.clearance_cap)
    feasible = ~(cost >= INSCRIBED).any(axis=1)
    clearance = np.minimum(clear.min(axis=1), cfg.clearance_cap) / cfg.clearance_cap
    heading = _heading_scores(rollouts[:, -1], target)
    velocity = v / params.v_max
    return heading, clearance, velocity, feasible


def score_trajectory(traj: Trajectory, cmd: Twist, global_path, local_cm: CostMap, cfg: DwaConfig,
                     params: KinematicParams) -> ScoredTrajectory:
    """Raw component scores of one rollout; ``total`` is their plain weighted sum."""
    poses = path_poses(global_path)
    start = traj.poses[0]
    target = lookahead_target(path_xy(poses), start.x, start.y, cfg.lookahead, poses[-1].theta)
    arr = traj.as_array()[None]
    arr[0, :, 2] = np.unwrap(arr[0, :, 2])
    h, c, vel, ok = _evaluate(arr, np.array([cmd.v]), target, local_cm, local_cm.obstacle_distance, cfg, params)
    wh, wc, wv = cfg.weights
    total = wh * h[0] + wc * c[0] + wv * vel[0]
    return ScoredTrajectory(cmd, traj, float(h[0]), float(c[0]), float(vel[0]), float(total), bool(ok[0]))


def _normalise(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    if not mask.any():
        return out
    lo, hi = x[mask].min(), x[mask].max()
    if hi > lo:
        out = (x - lo) / (hi - lo)
    return out


def recovery_command(pose: Pose, target, params: KinematicParams) -> Twist:
    """Rotate in place toward ``target`` at half the maximum turn rate."""
    bearing = math.atan2(target[1] - pose.y, target[0] - pose.x)
    err = float(normalize_angles(np.array([bearing - pose.theta]))[0])
    return Twist(0.0, math.copysign(params.w_max / 2.0, err if err != 0 else 1.0))


def dwa_plan(pose: Pose, current: Twist, global_path, local_cm: CostMap, cfg: DwaConfig,
             params: KinematicParams, dt_cycle: float | None = None,
             keep_candidates: bool = False) -> LocalPlan:
    """One DWA cycle.

    With ``keep_candidates`` the plan carries a :class:`ScoredTrajectory` for
    every sample, in sampling order (v-major).
    """
    poses = path_poses(global_path)
    dt_cycle = params.dt if dt_cycle is None else dt_cycle
    target = lookahead_target(path_xy(poses), pose.x, pose.y, cfg.lookahead, poses[-1].theta)

    (v_lo, v_hi), (w_lo, w_hi) = dynamic_window(current, cfg, params, dt_cycle)
    vv, ww = np.meshgrid(np.linspace(v_lo, v_hi, cfg.v_samples), np.linspace(w_lo, w_hi, cfg.w_samples),
                         indexing="ij")
    v = vv.ravel()
    w = ww.ravel()
    # enforce the wheel limit; clamped samples that leave the window are dropped
    in_window = np.ones(v.size, dtype=bool)
    for i in range(v.size):
        t = clamp_twist(Twist(float(v[i]), float(w[i])), params)
        if (t.v, t.w) != (v[i], w[i]):
            v[i], w[i] = t.v, t.w
            in_window[i] = v_lo - 1e-12 <= t.v <= v_hi + 1e-12 and w_lo - 1e-12 <= t.w <= w_hi + 1e-12

    rollouts = rollout_batch(pose.x, pose.y, pose.theta, v, w, cfg.sim_steps, cfg.sim_dt)
    dist = local_cm.obstacle_distance
    heading, clearance, velocity, feasible = _evaluate(rollouts, v, target, local_cm, dist, cfg, params)
    feasible &= in_window
    wh, wc, wv = cfg.weights
    total = (wh * _normalise(heading, feasible) + wc * _normalise(clearance, feasible)
             + wv * _normalise(velocity, feasible))

    def scored(i: int) -> ScoredTrajectory:
        traj = Trajectory(tuple(Pose(*p) for p in rollouts[i]), cfg.sim_dt)
        return ScoredTrajectory(Twist(float(v[i]), float(w[i])), traj, float(heading[i]),
                                float(clearance[i]), float(velocity[i]), float(total[i]), bool(feasible[i]))

    candidates = tuple(scored(i) for i in range(v.size)) if keep_candidates else ()
    if not feasible.any():
        return LocalPlan(recovery_command(pose, target, params), None, True, 0.0, candidates)
    idx = np.nonzero(feasible)[0]
    # max total, then smaller |w|, then lower index
    best = min(idx, key=lambda i: (-total[i], abs(w[i]), i))
    c = candidates[best] if keep_candidates else scored(best)
    return LocalPlan(c.command, c.trajectory, False, c.total, candidates)

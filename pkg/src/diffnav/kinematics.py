"""Differential-drive chassis model.

Twist <-> wheel-speed conversion, the per-wheel speed limit and forward-Euler
pose propagation of the unicycle model::

    x'  = x + v cos(theta) dt
    y'  = y + v sin(theta) dt
    th' = th + w dt
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if -math.pi < theta <= math.pi:
        return theta
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


def normalize_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorised :func:`normalize_angle`."""
    theta = np.asarray(theta, dtype=float)
    out = np.mod(theta + np.pi, TWO_PI)
    out = np.where(out <= 0.0, out + TWO_PI, out) - np.pi
    return np.where((theta > -np.pi) & (theta <= np.pi), theta, out)


@dataclass(frozen=True)
class Pose:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


@dataclass(frozen=True)
class Twist:
    v: float = 0.0
    w: float = 0.0


@dataclass(frozen=True)
class WheelSpeeds:
    left: float
    right: float


@dataclass(frozen=True)
class KinematicParams:
    half_track: float = 0.25
    v_max: float = 1.0
    dt: float = 0.1

    def __post_init__(self):
        if not (self.half_track > 0 and self.v_max > 0 and self.dt > 0):
            raise ValueError(f"kinematic parameters must be positive: {self}")

    @property
    def w_max(self) -> float:
        """Largest yaw rate allowed by the wheel limit (reached at v = 0)."""
        return self.v_max / self.half_track


@dataclass(frozen=True)
class Trajectory:
    poses: tuple[Pose, ...]
    dt: float

    def __post_init__(self):
        if not self.poses:
            raise ValueError("trajectory must contain at least one pose")

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self) -> Iterator[Pose]:
        return iter(self.poses)

    @property
    def final(self) -> Pose:
        return self.poses[-1]

    def as_array(self) -> np.ndarray:
        return np.array([[p.x, p.y, p.theta] for p in self.poses])


def wheels_to_twist(ws: WheelSpeeds, p: KinematicParams) -> Twist:
    return Twist((ws.left + ws.right) / 2.0, (ws.right - ws.left) / (2.0 * p.half_track))


def twist_to_wheels(t: Twist, p: KinematicParams) -> WheelSpeeds:
    return WheelSpeeds(t.v - t.w * p.half_track, t.v + t.w * p.half_track)


def within_wheel_limits(t: Twist, p: KinematicParams, tol: float = 1e-9) -> bool:
    ws = twist_to_wheels(t, p)
    return abs(ws.left) <= p.v_max + tol and abs(ws.right) <= p.v_max + tol


def clamp_twist(t: Twist, p: KinematicParams) -> Twist:
    """Scale a twist uniformly so both wheels respect ``v_max``.

    Uniform scaling keeps the commanded curvature; a feasible twist is
    returned unchanged.
    """
    ws = twist_to_wheels(t, p)
    peak = max(abs(ws.left), abs(ws.right))
    if peak <= p.v_max:
        return t
    s = p.v_max / peak
    return wheels_to_twist(WheelSpeeds(ws.left * s, ws.right * s), p)


def step_euler(pose: Pose, cmd: Twist, dt: float) -> Pose:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Pose(
        pose.x + cmd.v * math.cos(pose.theta) * dt,
        pose.y + cmd.v * math.sin(pose.theta) * dt,
        pose.theta + cmd.w * dt,
    )


def rollout(pose: Pose, cmd: Twist, horizon_steps: int, dt: float) -> Trajectory:
    """Propagate a constant command for ``horizon_steps`` Euler steps."""
    if horizon_steps < 1:
        raise ValueError("horizon_steps must be >= 1")
    poses = [pose]
    for _ in range(horizon_steps):
        poses.append(step_euler(poses[-1], cmd, dt))
    return Trajectory(tuple(poses), dt)


def rollout_inputs(pose: Pose, cmds: Sequence[Twist], dt: float) -> Trajectory:
    """Propagate a sequence of commands, one Euler step each."""
    poses = [pose]
    for cmd in cmds:
        poses.append(step_euler(poses[-1], cmd, dt))
    return Trajectory(tuple(poses), dt)


def rollout_batch(x: float, y: float, theta: float, v: np.ndarray, w: np.ndarray,
                  horizon_steps: int, dt: float) -> np.ndarray:
    """Vectorised constant-command rollouts.

    Returns an array of shape ``(len(v), horizon_steps + 1, 3)``; the heading
    channel is left unwrapped.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    out = np.empty((v.size, horizon_steps + 1, 3))
    out[:, 0] = (x, y, theta)
    for k in range(horizon_steps):
        th = out[:, k, 2]
        out[:, k + 1, 0] = out[:, k, 0] + v * np.cos(th) * dt
        out[:, k + 1, 1] = out[:, k, 1] + v * np.sin(th) * dt
        out[:, k + 1, 2] = th + w * dt
    return out

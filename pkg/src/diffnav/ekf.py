"""Extended Kalman filter fusing wheel odometry and a gyro.

The state is ``(x, y, theta, v, w)`` with a constant-velocity prediction, so
both sensors observe the state linearly: odometry measures ``(v, w)`` and the
gyro measures ``w``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .kinematics import Pose, Twist, normalize_angle

log = logging.getLogger(__name__)

X, Y, THETA, V, W = range(5)

H_ODOM = np.array([[0.0, 0.0, 0.0, 1.0, 0.0],
                   [0.0, 0.0, 0.0, 0.0, 1.0]])
H_GYRO = np.array([[0.0, 0.0, 0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class EkfState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(5)
        mean[THETA] = normalize_angle(mean[THETA])
        cov = np.array(self.cov, dtype=float).reshape(5, 5)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @classmethod
    def initial(cls, pose: Pose, twist: Twist = Twist(), pose_var: float = 1e-6,
                twist_var: float = 1e-2) -> "EkfState":
        return cls(np.array([pose.x, pose.y, pose.theta, twist.v, twist.w]),
                   np.diag([pose_var, pose_var, pose_var, twist_var, twist_var]))

    @property
    def pose(self) -> Pose:
        return Pose(self.mean[X], self.mean[Y], self.mean[THETA])

    @property
    def twist(self) -> Twist:
        return Twist(self.mean[V], self.mean[W])


@dataclass(frozen=True)
class EkfConfig:
    """Noise settings.

    ``process_noise`` is a per-second diagonal; it is scaled by ``dt`` in the
    prediction. ``odom_noise`` is the (v, w) measurement variance and
    ``gyro_noise`` the yaw-rate variance.
    """

    process_noise: tuple[float, ...] = (1e-4, 1e-4, 1e-4, 0.25, 1.0)
    odom_noise: tuple[float, float] = (1e-4, 0.09)
    gyro_noise: float = 4e-4

    def __post_init__(self):
        if len(self.process_noise) != 5 or len(self.odom_noise) != 2:
            raise ValueError("process_noise needs 5 entries and odom_noise 2")
        if min(self.process_noise) <= 0 or min(self.odom_noise) <= 0 or self.gyro_noise <= 0:
            raise ValueError("EKF noise diagonals must be positive")

    @classmethod
    def from_noise(cls, noise, v_nominal: float = 0.5, w_nominal: float = 1.0,
                   process_noise: tuple[float, ...] | None = None) -> "EkfConfig":
        """Measurement variances read off a sensor noise model at nominal speeds."""
        eps = 1e-8
        r_v = (noise.odom_v_std * v_nominal) ** 2 + eps
        r_w = (noise.odom_w_std ** 2 + noise.rotation_vibration_std ** 2) * w_nominal ** 2 + eps
        kwargs = {} if process_noise is None else {"process_noise": tuple(process_noise)}
        return cls(odom_noise=(r_v, r_w), gyro_noise=noise.gyro_std ** 2 + eps, **kwargs)

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.process_noise)


def transition(mean: np.ndarray, dt: float) -> np.ndarray:
    """Constant-velocity Euler step of the augmented state (heading unwrapped)."""
    x, y, th, v, w = mean
    return np.array([x + v * math.cos(th) * dt, y + v * math.sin(th) * dt, th + w * dt, v, w])


def transition_jacobian(mean: np.ndarray, dt: float) -> np.ndarray:
    _, _, th, v, _ = mean
    c, s = math.cos(th), math.sin(th)
    F = np.eye(5)
    F[X, THETA] = -v * s * dt
    F[X, V] = c * dt
    F[Y, THETA] = v * c * dt
    F[Y, V] = s * dt
    F[THETA, W] = dt
    return F


def ekf_predict(state: EkfState, dt: float, cfg: EkfConfig) -> EkfState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    F = transition_jacobian(state.mean, dt)
    P = F @ state.cov @ F.T + cfg.Q * dt
    return EkfState(transition(state.mean, dt), P)


def _linear_update(state: EkfState, z: np.ndarray, H: np.ndarray, R: np.ndarray) -> EkfState:
    if not np.all(np.isfinite(z)):
        log.warning("rejected non-finite measurement %s", z)
        return state
    P = state.cov
    innovation = z - H @ state.mean
    S = H @ P @ H.T + R
    K = np.linalg.solve(S, H @ P).T
    mean = state.mean + K @ innovation
    I_KH = np.eye(5) - K @ H
    P_new = I_KH @ P @ I_KH.T + K @ R @ K.T
    return EkfState(mean, P_new)


def ekf_update_odom(state: EkfState, z, cfg: EkfConfig) -> EkfState:
    """Fuse a wheel-odometry twist measurement ``(v_meas, w_meas)``."""
    if isinstance(z, Twist):
        z = (z.v, z.w)
    return _linear_update(state, np.asarray(z, dtype=float).reshape(2), H_ODOM, np.diag(cfg.odom_noise))


def ekf_update_gyro(state: EkfState, z: float, cfg: EkfConfig) -> EkfState:
    return _linear_update(state, np.array([float(z)]), H_GYRO, np.array([[cfg.gyro_noise]]))


@dataclass
class PoseFilter:
    """Convenience wrapper running update-then-predict once per control cycle.

    The measurements taken over ``[t, t + dt]`` update the velocity states,
    which then carry the pose forward to ``t + dt`` with the same Euler step
    as the dead-reckoned odometry.
    """

    cfg: EkfConfig
    state: EkfState

    def step(self, odom: Twist, gyro: float, dt: float) -> Pose:
        s = ekf_update_odom(self.state, odom, self.cfg)
        s = ekf_update_gyro(s, gyro, self.cfg)
        self.state = ekf_predict(s, dt, self.cfg)
        return self.state.pose

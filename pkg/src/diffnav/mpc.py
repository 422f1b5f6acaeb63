"""Linear time-varying MPC tracking of the global path.

The unicycle Euler step is linearised around a reference window sampled from
the path, the deviation dynamics are condensed into a quadratic in the stacked
input deviations, and the problem is solved by projected gradient descent
with the wheel-speed limit as the only constraint.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .costmap import INSCRIBED, CostMap
from .kinematics import KinematicParams, Pose, Trajectory, Twist, clamp_twist, normalize_angle, rollout_inputs
from .paths import LocalPlan, arc_lengths, interpolate, path_poses, path_xy, project_onto_polyline
from .dwa import recovery_command

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """The QP iteration produced a non-finite value."""


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, weights and solver settings.

    ``Q`` weights (x, y, theta) deviations at steps 1..N and ``Qf`` is added at
    step N. ``step_scale`` multiplies the 1/L gradient step (L the Lipschitz
    constant of the gradient); values in (0, 1] keep every iterate monotone.
    ``shift`` is the lateral offset of the avoidance reference; ``None``
    means the inflation radius of the costmap in use.
    """

    horizon: int = 20
    Q: tuple[float, float, float] = (10.0, 10.0, 1.0)
    R: tuple[float, float] = (1.0, 2.0)
    Qf: tuple[float, float, float] = (50.0, 50.0, 5.0)
    obstacle_weight: float = 150.0
    max_iters: int = 200
    step_tol: float = 1e-6
    step_scale: float = 1.0
    v_ref_frac: float = 0.8
    shift: float | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.Q) != 3 or len(self.Qf) != 3 or len(self.R) != 2:
            raise ValueError("Q and Qf need 3 entries, R needs 2")
        if min(self.Q) < 0 or min(self.Qf) < 0 or min(self.R) <= 0:
            raise ValueError("need Q, Qf >= 0 and R > 0")
        if self.obstacle_weight < 0 or self.max_iters < 1 or self.step_tol <= 0:
            raise ValueError(f"invalid MPC config {self}")
        if not 0 < self.step_scale <= 1 or not 0 < self.v_ref_frac <= 1:
            raise ValueError("step_scale and v_ref_frac must lie in (0, 1]")


@dataclass(frozen=True)
class ReferenceWindow:
    poses: tuple[Pose, ...]
    inputs: tuple[Twist, ...]
    dt: float

    def __post_init__(self):
        if len(self.poses) != len(self.inputs) + 1:
            raise ValueError("need N + 1 poses for N inputs")

    @property
    def horizon(self) -> int:
        return len(self.inputs)


@dataclass
class QpResult:
    du: np.ndarray
    objective: float
    iterations: int
    history: list = field(default_factory=list)


def extract_reference(global_path, pose: Pose, cfg: MpcConfig, params: KinematicParams,
                      dt: float | None = None) -> ReferenceWindow:
    """Sample ``N + 1`` poses ahead of the robot's projection onto the path.

    Samples are spaced by ``v_ref * dt`` of arc length; once the path end is
    reached the goal repeats with zero inputs.
    """
    poses = path_poses(global_path)
    dt = params.dt if dt is None else dt
    xy = path_xy(poses)
    total = arc_lengths(xy)[-1]
    s0 = project_onto_polyline(xy, pose.x, pose.y)
    ds = cfg.v_ref_frac * params.v_max * dt
    n = cfg.horizon
    s = s0 + ds * np.arange(n + 2)
    pts = interpolate(xy, s)
    ends = s >= total
    # heading of each sample follows the chord to the next one; at the end keep the last direction
    headings = []
    last = poses[-1].theta if total == 0.0 else None
    for k in range(n + 1):
        dx, dy = pts[k + 1] - pts[k]
        if dx * dx + dy * dy > 1e-18:
            last = math.atan2(dy, dx)
        elif last is None:
            last = _end_heading(xy, poses)
        headings.append(last)
    ref = tuple(Pose(float(pts[k, 0]), float(pts[k, 1]), headings[k]) for k in range(n + 1))
    inputs = []
    for k in range(n):
        if ends[k]:
            inputs.append(Twist(0.0, 0.0))
            continue
        dist = math.hypot(ref[k + 1].x - ref[k].x, ref[k + 1].y - ref[k].y)
        dth = normalize_angle(ref[k + 1].theta - ref[k].theta)
        inputs.append(clamp_twist(Twist(dist / dt, dth / dt), params))
    return ReferenceWindow(ref, tuple(inputs), dt)


def _end_heading(xy: np.ndarray, poses) -> float:
    d = np.diff(xy, axis=0)
    nz = np.nonzero((d ** 2).sum(axis=1) > 0)[0]
    if nz.size == 0:
        return poses[-1].theta
    dx, dy = d[nz[-1]]
    return math.atan2(dy, dx)


def linearize(ref_pose: Pose, ref_input: Twist, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians of the Euler step with respect to state and input at the reference."""
    c, s = math.cos(ref_pose.theta), math.sin(ref_pose.theta)
    A = np.eye(3)
    A[0, 2] = -ref_input.v * s * dt
    A[1, 2] = ref_input.v * c * dt
    B = np.array([[c * dt, 0.0], [s * dt, 0.0], [0.0, dt]])
    return A, B


def project_inputs(u: np.ndarray, v_max: float, half_track: float) -> np.ndarray:
    """Euclidean projection of each row (v, w) onto ``|v| + half_track * |w| <= v_max``."""
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    a = np.abs(u[:, 0])
    b = np.abs(u[:, 1])
    outside = a + half_track * b > v_max
    if not outside.any():
        return u.copy()
    excess = (a + half_track * b - v_max) / (1.0 + half_track * half_track)
    pa = a - excess
    pb = b - excess * half_track
    # past a vertex of the rhombus the projection is the vertex itself
    pa, pb = np.where(pb < 0, v_max, pa), np.where(pb < 0, 0.0, pb)
    pa, pb = np.where(pa < 0, 0.0, pa), np.where(pa < 0, v_max / half_track, pb)
    out = u.copy()
    out[outside, 0] = np.copysign(pa, u[:, 0])[outside]
    out[outside, 1] = np.copysign(pb, u[:, 1])[outside]
    return out


def condense(As, Bs, x0, weights, targets, R):
    """Quadratic ``U^T H U + 2 g^T U + c`` of the stacked input deviations.

    ``weights[k]`` and ``targets[k]`` apply to the state after step ``k``
    (k = 0..N-1 maps to states 1..N).
    """
    n = len(As)
    nx, nu = np.shape(Bs[0])
    Su = np.zeros((nx * n, nu * n))
    Sx = np.zeros((nx * n, nx))
    M = np.eye(nx)
    for k in range(n):
        rows = slice(nx * k, nx * (k + 1))
        M = As[k] @ M
        Sx[rows] = M
        Su[rows, nu * k:nu * (k + 1)] = Bs[k]
        for j in range(k):
            Su[rows, nu * j:nu * (j + 1)] = As[k] @ Su[nx * (k - 1):nx * k, nu * j:nu * (j + 1)]
    W = np.zeros((nx * n, nx * n))
    for k in range(n):
        W[nx * k:nx * (k + 1), nx * k:nx * (k + 1)] = weights[k]
    Rbar = np.kron(np.eye(n), np.diag(R))
    free = Sx @ np.asarray(x0, dtype=float) - np.concatenate(targets)
    H = Su.T @ W @ Su + Rbar
    g = Su.T @ W @ free
    c = float(free @ W @ free)
    return 0.5 * (H + H.T), g, c


def solve_qp(H: np.ndarray, g: np.ndarray, cfg: MpcConfig, c: float = 0.0, project=None) -> QpResult:
    """Projected gradient on ``U^T H U + 2 g^T U + c``.

    ``project`` maps a stacked iterate onto the feasible set (identity when
    omitted). Starts from the projection of the unconstrained minimiser and
    takes steps of ``step_scale / L``; raises :class:`AssertionError` if the
    objective ever increases beyond rounding and :class:`SolverError` on
    non-finite values.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    g = np.atleast_1d(np.asarray(g, dtype=float))
    if project is None:
        def project(U):
            return U

    def objective(U):
        return float(U @ H @ U + 2.0 * g @ U + c)

    L = 2.0 * float(np.linalg.eigvalsh(H)[-1])
    if not math.isfinite(L) or L <= 0:
        raise SolverError("QP Hessian is not positive definite")
    step = cfg.step_scale / L
    U = project(np.linalg.solve(H, -g))
    f = objective(U)
    history = [f]
    it = 0
    for it in range(1, cfg.max_iters + 1):
        nxt = project(U - step * 2.0 * (H @ U + g))
        if not np.all(np.isfinite(nxt)):
            raise SolverError("non-finite QP iterate")
        f_new = objective(nxt)
        if f_new > f + 1e-9 * max(1.0, abs(f)):
            raise AssertionError(f"QP objective increased from {f} to {f_new}")
        moved = float(np.linalg.norm(nxt - U))
        U, f = nxt, f_new
        history.append(f)
        if moved < cfg.step_tol:
            break
    return QpResult(U, f, it, history)


def _deviation(pose: Pose, ref: Pose) -> np.ndarray:
    return np.array([pose.x - ref.x, pose.y - ref.y, normalize_angle(pose.theta - ref.theta)])


def solve_tracking_qp(window: ReferenceWindow, x0, cfg: MpcConfig, params: KinematicParams,
                      extra_weights=None, extra_targets=None) -> QpResult:
    """Optimal input deviations for a reference window.

    ``x0`` is the current deviation from ``window.poses[0]`` (heading wrapped).
    ``extra_weights``/``extra_targets`` add per-step penalties
    ``(dx - t)^T W (dx - t)`` on the states after each input.
    """
    n = window.horizon
    As, Bs = zip(*(linearize(window.poses[k], window.inputs[k], window.dt) for k in range(n)))
    Q = np.diag(cfg.Q)
    weights = [Q.copy() for _ in range(n)]
    weights[-1] = weights[-1] + np.diag(cfg.Qf)
    targets = [np.zeros(3) for _ in range(n)]
    if extra_weights is not None:
        # merge two quadratics sharing one variable: (W1 + W2)^-1 (W1 t1 + W2 t2) as new target
        for k in range(n):
            W2, t2 = np.asarray(extra_weights[k]), np.asarray(extra_targets[k])
            if not W2.any():
                continue
            W = weights[k] + W2
            targets[k] = np.linalg.lstsq(W, weights[k] @ targets[k] + W2 @ t2, rcond=None)[0]
            weights[k] = W
    H, g, c = condense(As, Bs, np.asarray(x0, dtype=float), weights, targets, cfg.R)
    u_ref = np.array([[u.v, u.w] for u in window.inputs])

    def project(U):
        return (project_inputs(u_ref + U.reshape(-1, 2), params.v_max, params.half_track) - u_ref).ravel()

    res = solve_qp(H, g, cfg, c, project)
    res.du = res.du.reshape(-1, 2)
    return res


def _colliding_steps(traj: Trajectory, cm: CostMap) -> list[int]:
    arr = traj.as_array()
    costs = cm.costs_at(arr[:, 0], arr[:, 1])
    return [int(k) for k in np.nonzero(costs >= INSCRIBED)[0]]


def _avoidance_terms(traj: Trajectory, window: ReferenceWindow, cm: CostMap, cfg: MpcConfig, hits, shift):
    """Per-step weights and targets pulling colliding states sideways, away from the nearest lethal cell."""
    n = window.horizon
    weights = [np.zeros((3, 3)) for _ in range(n)]
    targets = [np.zeros(3) for _ in range(n)]
    lethal = np.argwhere(cm.cost == 255)
    if lethal.size == 0:
        return weights, targets
    ly = cm.origin.y + (lethal[:, 0] + 0.5) * cm.resolution
    lx = cm.origin.x + (lethal[:, 1] + 0.5) * cm.resolution
    for k in hits:
        if k == 0:
            continue
        p = traj.poses[k]
        j = int(np.argmin((lx - p.x) ** 2 + (ly - p.y) ** 2))
        ref = window.poses[k]
        nx, ny = -math.sin(ref.theta), math.cos(ref.theta)
        side = (ref.x - lx[j]) * nx + (ref.y - ly[j]) * ny
        sign = 1.0 if side >= 0 else -1.0
        weights[k - 1] = cfg.obstacle_weight * np.diag([1.0, 1.0, 0.0])
        targets[k - 1] = np.array([sign * shift * nx, sign * shift * ny, 0.0])
    return weights, targets


def _future_hits(traj: Trajectory, cm: CostMap) -> list[int]:
    # the current pose is where the robot already is; only predicted poses count
    return [k for k in _colliding_steps(traj, cm) if k > 0]


def mpc_plan(pose: Pose, current: Twist, global_path, local_cm: CostMap, cfg: MpcConfig,
             params: KinematicParams, dt: float | None = None, inflation_radius: float = 0.7) -> LocalPlan:
    """One MPC cycle; ``score`` is the final QP objective.

    ``current`` is accepted for interface symmetry with DWA; the condensed
    problem has no rate terms.
    """
    shift = inflation_radius if cfg.shift is None else cfg.shift
    window = extract_reference(global_path, pose, cfg, params, dt)
    x0 = _deviation(pose, window.poses[0])
    u_ref = np.array([[u.v, u.w] for u in window.inputs])

    def attempt(extra_w=None, extra_t=None):
        res = solve_tracking_qp(window, x0, cfg, params, extra_w, extra_t)
        u = u_ref + res.du
        cmds = [clamp_twist(Twist(float(a), float(b)), params) for a, b in u]
        return res, cmds, rollout_inputs(pose, cmds, window.dt)

    def blocked():
        poses = path_poses(global_path)
        target = window.poses[min(len(window.poses) - 1, 5)]
        if math.hypot(target.x - pose.x, target.y - pose.y) < 1e-9:
            target = poses[-1]
        return LocalPlan(recovery_command(pose, (target.x, target.y), params), None, True, float("inf"))

    try:
        res, cmds, traj = attempt()
        hits = _future_hits(traj, local_cm)
        if hits:
            w, t = _avoidance_terms(traj, window, local_cm, cfg, hits, shift)
            res, cmds, traj = attempt(w, t)
            if _future_hits(traj, local_cm):
                return blocked()
    except SolverError as exc:
        log.warning("MPC solve failed: %s", exc)
        return blocked()
    return LocalPlan(cmds[0], traj, False, res.objective)

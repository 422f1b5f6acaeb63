"""Small geometric helpers over pose sequences shared by the local planners."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import Pose, Trajectory, Twist


def path_poses(path) -> tuple[Pose, ...]:
    """Accept a GridPath-like object (``world_poses``) or a plain pose sequence."""
    poses = getattr(path, "world_poses", path)
    poses = tuple(poses)
    if not poses:
        raise ValueError("global path is empty")
    return poses


def path_xy(poses) -> np.ndarray:
    return np.array([[p.x, p.y] for p in poses], dtype=float).reshape(-1, 2)


def nearest_index(xy: np.ndarray, x: float, y: float) -> int:
    d2 = (xy[:, 0] - x) ** 2 + (xy[:, 1] - y) ** 2
    return int(np.argmin(d2))


def lookahead_index(xy: np.ndarray, x: float, y: float, distance: float) -> int:
    """First path index after the nearest one lying at least ``distance`` from (x, y)."""
    i0 = nearest_index(xy, x, y)
    d = np.hypot(xy[i0:, 0] - x, xy[i0:, 1] - y)
    far = np.nonzero(d >= distance)[0]
    return i0 + int(far[0]) if far.size else len(xy) - 1


def distance_to_polyline(xy: np.ndarray, px, py) -> np.ndarray:
    """Distance from each query point to the nearest segment of a polyline."""
    px = np.atleast_1d(np.asarray(px, dtype=float))
    py = np.atleast_1d(np.asarray(py, dtype=float))
    if len(xy) == 1:
        return np.hypot(px - xy[0, 0], py - xy[0, 1])
    a = xy[:-1]
    b = xy[1:]
    ab = b - a
    len2 = np.maximum((ab ** 2).sum(axis=1), 1e-300)
    qx = px[:, None] - a[None, :, 0]
    qy = py[:, None] - a[None, :, 1]
    t = np.clip((qx * ab[None, :, 0] + qy * ab[None, :, 1]) / len2[None, :], 0.0, 1.0)
    dx = qx - t * ab[None, :, 0]
    dy = qy - t * ab[None, :, 1]
    return np.sqrt(dx * dx + dy * dy).min(axis=1)


@dataclass(frozen=True)
class LocalPlan:
    """Output of one local-planner cycle.

    ``score`` is the DWA total of the chosen sample or the final MPC objective.
    ``trajectory`` is the chosen rollout (DWA) or the predicted trajectory (MPC).
    """

    command: Twist
    trajectory: Trajectory | None
    blocked: bool
    score: float
    candidates: tuple = ()


def arc_lengths(xy: np.ndarray) -> np.ndarray:
    seg = np.hypot(np.diff(xy[:, 0]), np.diff(xy[:, 1]))
    return np.concatenate([[0.0], np.cumsum(seg)])


def project_onto_polyline(xy: np.ndarray, x: float, y: float) -> float:
    """Arc length of the closest point on the polyline (first one on ties)."""
    s = arc_lengths(xy)
    if len(xy) == 1:
        return 0.0
    a = xy[:-1]
    ab = xy[1:] - a
    len2 = (ab ** 2).sum(axis=1)
    safe = np.where(len2 > 0, len2, 1.0)
    t = np.clip(((x - a[:, 0]) * ab[:, 0] + (y - a[:, 1]) * ab[:, 1]) / safe, 0.0, 1.0)
    t = np.where(len2 > 0, t, 0.0)
    px = a[:, 0] + t * ab[:, 0]
    py = a[:, 1] + t * ab[:, 1]
    i = int(np.argmin((px - x) ** 2 + (py - y) ** 2))
    return float(s[i] + t[i] * (s[i + 1] - s[i]))


def interpolate(xy: np.ndarray, s_query) -> np.ndarray:
    """Points at the given arc lengths, clamped to the polyline ends."""
    s = arc_lengths(xy)
    q = np.clip(np.asarray(s_query, dtype=float), 0.0, s[-1])
    if s[-1] == 0.0:
        return np.repeat(xy[:1], q.size, axis=0)
    # drop zero-length segments so np.interp sees increasing abscissae
    keep = np.concatenate([[True], np.diff(s) > 0])
    return np.column_stack([np.interp(q, s[keep], xy[keep, 0]), np.interp(q, s[keep], xy[keep, 1])])


def smooth_path(poses, spacing: float = 0.05, window: float = 0.4) -> tuple[Pose, ...]:
    """Resample at uniform ``spacing`` and apply a centred moving average of width ``window``.

    Removes the 45 degree staircase of grid paths; both endpoints are kept.
    Headings follow the smoothed segments, the last one repeated.
    """
    poses = tuple(poses)
    xy = path_xy(poses)
    total = arc_lengths(xy)[-1]
    if len(poses) < 3 or total <= spacing:
        return poses
    n = int(np.ceil(total / spacing))
    pts = interpolate(xy, np.linspace(0.0, total, n + 1))
    half = min(max(int(round(window / spacing / 2.0)), 0), len(pts) - 1)
    if half > 0:
        # point reflection about each end keeps the endpoints fixed and the end tangents straight
        head = 2.0 * pts[0] - pts[half:0:-1]
        tail = 2.0 * pts[-1] - pts[-2:-half - 2:-1]
        padded = np.concatenate([head, pts, tail])
        kernel = np.ones(2 * half + 1) / (2 * half + 1)
        pts = np.column_stack([np.convolve(padded[:, 0], kernel, "valid"),
                               np.convolve(padded[:, 1], kernel, "valid")])
        pts[0], pts[-1] = xy[0], xy[-1]
    d = np.diff(pts, axis=0)
    th = np.arctan2(d[:, 1], d[:, 0])
    th = np.concatenate([th, th[-1:]])
    return tuple(Pose(float(x), float(y), float(t)) for (x, y), t in zip(pts, th))


def smooth_clear_path(poses, cm, spacing: float, window: float) -> tuple[Pose, ...]:
    """:func:`smooth_path` with the widest window (halving down from ``window``)
    whose result keeps every point below the inscribed cost of ``cm``."""
    w = window
    while w >= 2.0 * spacing:
        out = smooth_path(poses, spacing, w)
        xy = path_xy(out)
        if (cm.costs_at(xy[:, 0], xy[:, 1]) < 254).all():
            return out
        w /= 2.0
    return smooth_path(poses, spacing, 0.0)

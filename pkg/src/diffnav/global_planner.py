"""A* and Dijkstra over an inflated costmap.

Both searches share one kernel: 8-connected moves, no corner cutting, and
edge weight ``step * (1 + penalty * cost(target) / 253)``. Dijkstra is the
same search with a zero heuristic and serves as the reference oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .costmap import INSCRIBED, CostMap
from .kinematics import Pose

DEFAULT_PENALTY = 2.0


class Unreachable(Exception):
    """No collision-free path exists between the requested cells."""


@dataclass(frozen=True)
class GridPath:
    cells: tuple[tuple[int, int], ...]
    world_poses: tuple[Pose, ...]
    total_cost: float

    def __len__(self) -> int:
        return len(self.cells)

    def xy(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.world_poses]).reshape(-1, 2)


def path_cost(cells, cm: CostMap, penalty: float = DEFAULT_PENALTY) -> float:
    """Traversal cost of a cell sequence.

    Orthogonal and diagonal contributions are summed exactly as rationals and
    combined once, so two paths with equal true cost report the same float
    regardless of the order in which their edges were accumulated.
    """
    p = Fraction(penalty)
    ortho = Fraction(0)
    diag = Fraction(0)
    for (c0, r0), (c1, r1) in zip(cells, cells[1:]):
        dc, dr = abs(c1 - c0), abs(r1 - r0)
        if max(dc, dr) != 1:
            raise ValueError(f"cells {(c0, r0)} and {(c1, r1)} are not 8-connected")
        w = 1 + p * int(cm.cost[r1, c1]) / 253
        if dc and dr:
            diag += w
        else:
            ortho += w
    return cm.resolution * (float(ortho) + math.sqrt(2.0) * float(diag))


def to_world_path(cells, cm: CostMap, decimate: int = 1) -> tuple[Pose, ...]:
    """Cell centres with headings along the path; keeps every ``decimate``-th pose plus endpoints."""
    if decimate < 1:
        raise ValueError("decimate must be >= 1")
    pts = [cm.cell_center(c, r) for c, r in cells]
    poses = []
    for i, (x, y) in enumerate(pts):
        if i + 1 < len(pts):
            nx, ny = pts[i + 1]
            theta = math.atan2(ny - y, nx - x)
        else:
            theta = poses[-1].theta if poses else 0.0
        poses.append(Pose(x, y, theta))
    if decimate > 1 and len(poses) > 2:
        keep = list(range(0, len(poses) - 1, decimate)) + [len(poses) - 1]
        poses = [poses[i] for i in keep]
    return tuple(poses)


def _cell_of(cm: CostMap, p) -> tuple[int, int]:
    if isinstance(p, Pose):
        col, row = cm.world_to_cell(p.x, p.y)
    else:
        col, row = int(p[0]), int(p[1])
    if not cm.in_bounds(col, row):
        raise Unreachable(f"{p} lies outside the costmap")
    return col, row


def _search(cm: CostMap, start, goal, penalty: float, use_heuristic: bool, decimate: int) -> GridPath:
    sc, sr = _cell_of(cm, start)
    gc, gr = _cell_of(cm, goal)
    for name, (c, r) in (("start", (sc, sr)), ("goal", (gc, gr))):
        if cm.cost[r, c] >= INSCRIBED:
            raise Unreachable(f"{name} cell ({c}, {r}) is in collision (cost {cm.cost[r, c]})")
    flat = _kernels.grid_search(cm.cost, sr, sc, gr, gc, cm.resolution, float(penalty), use_heuristic)
    if not flat:
        raise Unreachable(f"no path from ({sc}, {sr}) to ({gc}, {gr})")
    cells = tuple((int(i % cm.width), int(i // cm.width)) for i in flat)
    return GridPath(cells, to_world_path(cells, cm, decimate), path_cost(cells, cm, penalty))


def astar(cm: CostMap, start, goal, penalty: float = DEFAULT_PENALTY, decimate: int = 1) -> GridPath:
    """Minimum-cost path with a Euclidean heuristic.

    ``start`` and ``goal`` are world poses or ``(col, row)`` cells. Raises
    :class:`Unreachable` when either end is in collision or disconnected.
    """
    return _search(cm, start, goal, penalty, True, decimate)


def dijkstra(cm: CostMap, start, goal, penalty: float = DEFAULT_PENALTY, decimate: int = 1) -> GridPath:
    return _search(cm, start, goal, penalty, False, decimate)


def path_is_clear(path: GridPath, cm: CostMap) -> bool:
    """True while no path cell has become inscribed or lethal."""
    return all(cm.cost[r, c] < INSCRIBED for c, r in path.cells)


def nearest_free_cell(cm: CostMap, col: int, row: int) -> tuple[int, int]:
    """Closest cell (by centre distance, ties by row then col) whose cost is below inscribed."""
    free = np.argwhere(cm.cost < INSCRIBED)
    if free.size == 0:
        raise Unreachable("costmap has no free cells")
    d2 = (free[:, 0] - row) ** 2 + (free[:, 1] - col) ** 2
    r, c = free[int(np.argmin(d2))]
    return int(c), int(r)

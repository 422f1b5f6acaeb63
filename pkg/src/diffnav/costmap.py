"""Inflated cost rasters built from occupancy grids.

Costs follow the usual navigation convention: 255 lethal (an obstacle cell),
254 inscribed (the robot centre there would put the footprint on an obstacle),
253..1 a decaying safety margin and 0 free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels
from .grid import OccupancyGrid
from .kinematics import Pose

LETHAL = 255
INSCRIBED = 254
FREE_COST = 0

# distances are compared in cell units with this slack so that e.g. 4 cells at
# 0.05 m still count as "within 0.2 m"
_DIST_TOL = 1e-9


@dataclass(frozen=True)
class InflationConfig:
    robot_radius: float = 0.25
    inflation_radius: float = 0.7
    decay_rate: float = 5.0

    def __post_init__(self):
        if not self.inflation_radius >= self.robot_radius > 0:
            raise ValueError("need inflation_radius >= robot_radius > 0")
        if self.decay_rate <= 0:
            raise ValueError("decay_rate must be positive")


@dataclass(frozen=True)
class CostMap:
    """Immutable uint8 cost raster sharing the geometry of an occupancy grid."""

    width: int
    height: int
    resolution: float
    origin: Pose
    cost: np.ndarray
    stamp: int = 0

    def __post_init__(self):
        cost = np.ascontiguousarray(self.cost, dtype=np.uint8)
        if cost.shape != (self.height, self.width):
            raise ValueError(f"cost shape {cost.shape} != ({self.height}, {self.width})")
        if cost.flags.writeable:
            cost = cost.copy()
            cost.flags.writeable = False
        object.__setattr__(self, "cost", cost)

    @classmethod
    def from_array(cls, cost, resolution: float = 1.0, origin: Pose | None = None, stamp: int = 0) -> "CostMap":
        cost = np.asarray(cost)
        return cls(cost.shape[1], cost.shape[0], resolution, origin or Pose(), cost, stamp)

    def geometry(self) -> OccupancyGrid:
        """Occupancy grid with the same layout (lethal cells occupied)."""
        return OccupancyGrid(self.width, self.height, self.resolution, self.origin,
                             (self.cost == LETHAL).astype(float))

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor((x - self.origin.x) / self.resolution)),
                int(math.floor((y - self.origin.y) / self.resolution)))

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        return (self.origin.x + (col + 0.5) * self.resolution,
                self.origin.y + (row + 0.5) * self.resolution)

    def in_bounds(self, col: int, row: int) -> bool:
        return 0 <= col < self.width and 0 <= row < self.height

    def cost_at(self, x: float, y: float, outside: int = FREE_COST) -> int:
        col, row = self.world_to_cell(x, y)
        if not self.in_bounds(col, row):
            return outside
        return int(self.cost[row, col])

    def costs_at(self, xs, ys, outside: int = FREE_COST) -> np.ndarray:
        """Vectorised :meth:`cost_at` over arrays of world points."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        cols = np.floor((xs - self.origin.x) / self.resolution).astype(np.int64)
        rows = np.floor((ys - self.origin.y) / self.resolution).astype(np.int64)
        inside = (cols >= 0) & (cols < self.width) & (rows >= 0) & (rows < self.height)
        out = np.full(xs.shape, outside, dtype=np.int64)
        out[inside] = self.cost[rows[inside], cols[inside]]
        return out

    def lethal_mask(self) -> np.ndarray:
        return np.ascontiguousarray(self.cost == LETHAL, dtype=np.uint8)

    @cached_property
    def obstacle_distance(self) -> np.ndarray:
        """Distance in metres from each cell centre to the nearest lethal cell centre."""
        d = _kernels.distance_field(self.lethal_mask()) * self.resolution
        d.flags.writeable = False
        return d


def from_occupancy(grid: OccupancyGrid, occ_threshold: float = 0.5, unknown_lethal: bool = False,
                   stamp: int = 0) -> CostMap:
    """Rasterise: ``p >= occ_threshold`` is lethal, unknown is free unless ``unknown_lethal``."""
    cost = np.zeros((grid.height, grid.width), dtype=np.uint8)
    cost[grid.occupied_mask(occ_threshold).astype(bool)] = LETHAL
    if unknown_lethal:
        cost[grid.unknown_mask()] = LETHAL
    return CostMap(grid.width, grid.height, grid.resolution, grid.origin, cost, stamp)


def inflation_cost(d: np.ndarray, cfg: InflationConfig) -> np.ndarray:
    """Cost as a function of metric distance to the nearest lethal cell (0 at d = 0 excluded)."""
    d = np.asarray(d, dtype=float)
    decay = np.floor(253.0 * np.exp(-cfg.decay_rate * np.maximum(d - cfg.robot_radius, 0.0)) + 0.5)
    out = np.where(d <= cfg.inflation_radius + _DIST_TOL, decay, 0.0)
    out = np.where(d <= cfg.robot_radius + _DIST_TOL, INSCRIBED, out)
    return out.astype(np.uint8)


def inflate(cm: CostMap, cfg: InflationConfig) -> CostMap:
    """Expand lethal cells by the robot radius plus an exponentially decaying margin.

    Distances come from an exact Euclidean distance transform between cell
    centres; existing costs are only ever raised.
    """
    lethal = cm.lethal_mask()
    if not lethal.any():
        return cm
    d_cells = _kernels.distance_field(lethal)
    res = cm.resolution
    # work in cell units so tolerances do not depend on the resolution
    scaled = InflationConfig(cfg.robot_radius / res, cfg.inflation_radius / res, cfg.decay_rate * res)
    cost = np.maximum(cm.cost, inflation_cost(d_cells, scaled))
    cost[lethal.astype(bool)] = LETHAL
    return CostMap(cm.width, cm.height, cm.resolution, cm.origin, cost, cm.stamp)


@dataclass
class LocalWindow:
    """Rolling-window costmap builder; each :meth:`update` bumps the stamp."""

    size: float = 5.0
    inflation: InflationConfig = field(default_factory=InflationConfig)
    hit_depth_cells: float = 0.5
    stamp: int = 0

    def update(self, global_cm: CostMap, pose: Pose, scan) -> CostMap:
        self.stamp += 1
        return local_window(global_cm, pose, self.size, scan, self.inflation,
                            stamp=self.stamp, hit_depth_cells=self.hit_depth_cells)


def crop(cm: CostMap, col0: int, row0: int, n_cols: int, n_rows: int, fill: int = FREE_COST) -> np.ndarray:
    """Copy of a cell-aligned block; cells outside ``cm`` get ``fill``."""
    out = np.full((n_rows, n_cols), fill, dtype=np.uint8)
    c0, r0 = max(col0, 0), max(row0, 0)
    c1, r1 = min(col0 + n_cols, cm.width), min(row0 + n_rows, cm.height)
    if c0 < c1 and r0 < r1:
        out[r0 - row0:r1 - row0, c0 - col0:c1 - col0] = cm.cost[r0:r1, c0:c1]
    return out


def local_window(global_cm: CostMap, pose: Pose, size: float, scan, cfg: InflationConfig,
                 stamp: int = 0, hit_depth_cells: float = 0.5) -> CostMap:
    """Square window around ``pose`` aligned with the global cells.

    The window starts from the global lethal layer, clears every cell a beam
    passed through, marks every beam endpoint lethal and is then re-inflated.
    ``scan`` angles are in the robot frame of ``pose``.
    """
    res = global_cm.resolution
    n = max(int(round(size / res)), 1)
    col0 = int(math.floor((pose.x - global_cm.origin.x) / res)) - n // 2
    row0 = int(math.floor((pose.y - global_cm.origin.y) / res)) - n // 2
    origin = Pose(global_cm.origin.x + col0 * res, global_cm.origin.y + row0 * res)
    lethal = crop(global_cm, col0, row0, n, n) == LETHAL

    world = np.ascontiguousarray(pose.theta + np.asarray(scan.angles, dtype=float))
    ranges = np.ascontiguousarray(scan.ranges, dtype=float)
    # clearing: +1 lethal / -1 free, beams push traversed cells to -1 and leave endpoints alone
    marks = np.where(lethal, 1.0, -1.0)
    observed = np.zeros((n, n), dtype=np.uint8)
    _kernels.integrate_rays(marks, observed, origin.x, origin.y, res, pose.x, pose.y, world, ranges,
                            scan.max_range, -2.0, 0.0, 1.0, hit_depth_cells * res)
    lethal = marks > 0
    # marking
    hit = ranges < scan.max_range
    r = ranges[hit] + hit_depth_cells * res
    ex = pose.x + r * np.cos(world[hit])
    ey = pose.y + r * np.sin(world[hit])
    cols = np.floor((ex - origin.x) / res).astype(np.int64)
    rows = np.floor((ey - origin.y) / res).astype(np.int64)
    ok = (cols >= 0) & (cols < n) & (rows >= 0) & (rows < n)
    lethal[rows[ok], cols[ok]] = True

    cost = np.where(lethal, LETHAL, FREE_COST).astype(np.uint8)
    return inflate(CostMap(n, n, res, origin, cost, stamp), cfg)


def save_pgm(cm: CostMap, path) -> None:
    """Plain (P2) PGM with the raw cost values, top row (largest y) first."""
    lines = ["P2", f"# resolution {cm.resolution!r} origin {cm.origin.x!r} {cm.origin.y!r}",
             f"{cm.width} {cm.height}", "255"]
    for row in range(cm.height - 1, -1, -1):
        lines.append(" ".join(str(int(c)) for c in cm.cost[row]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_pgm(path, resolution: float = 1.0, origin: Pose | None = None) -> CostMap:
    tokens = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            parts = line.split()
            if "resolution" in parts:
                resolution = float(parts[parts.index("resolution") + 1])
            if "origin" in parts:
                i = parts.index("origin")
                origin = Pose(float(parts[i + 1]), float(parts[i + 2]))
            continue
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path} is not a plain PGM file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("only 8-bit PGM files are supported")
    vals = np.array(tokens[4:], dtype=np.int64)
    if vals.size != width * height:
        raise ValueError(f"{path}: expected {width * height} values, found {vals.size}")
    cost = vals.reshape(height, width)[::-1].astype(np.uint8)
    return CostMap(width, height, resolution, origin or Pose(), cost)

"""Occupancy grid container and the plain-text map format.

Map text format::

    # diffnav map
    width <cells>
    height <cells>
    resolution <meters per cell>
    origin <x> <y> <theta>
    <height lines of width characters>

Cell characters are ``.`` (free), ``#`` (occupied) and ``?`` (unknown). The
first grid line is the top row (largest y) so the file reads like an image.
Origin is the world position of the lower-left corner of cell (0, 0); only
axis-aligned maps (theta = 0) are supported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import Pose

FREE = 0.0
OCCUPIED = 1.0
UNKNOWN = float("nan")

_CHARS = {".": FREE, "#": OCCUPIED, "?": UNKNOWN}


@dataclass
class OccupancyGrid:
    """Probability raster; NaN marks unknown cells.

    ``data`` is indexed ``[row, col]`` with row 0 at the minimum y.
    """

    width: int
    height: int
    resolution: float
    origin: Pose = field(default_factory=Pose)
    data: np.ndarray | None = None

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.origin.theta != 0.0:
            raise ValueError("only axis-aligned grids (origin theta = 0) are supported")
        if self.data is None:
            self.data = np.zeros((self.height, self.width))
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.height, self.width):
            raise ValueError(f"data shape {self.data.shape} != ({self.height}, {self.width})")
        known = self.data[~np.isnan(self.data)]
        if known.size and (known.min() < 0.0 or known.max() > 1.0):
            raise ValueError("cell probabilities must lie in [0, 1]")

    @classmethod
    def empty(cls, size_x: float, size_y: float, resolution: float,
              origin: Pose | None = None, fill: float = FREE) -> "OccupancyGrid":
        w = int(round(size_x / resolution))
        h = int(round(size_y / resolution))
        return cls(w, h, resolution, origin or Pose(), np.full((h, w), fill))

    @property
    def size_x(self) -> float:
        return self.width * self.resolution

    @property
    def size_y(self) -> float:
        return self.height * self.resolution

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.width, self.height, self.resolution, self.origin, self.data.copy())

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """(col, row) of the cell containing a world point; may be out of range."""
        return (int(math.floor((x - self.origin.x) / self.resolution)),
                int(math.floor((y - self.origin.y) / self.resolution)))

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        return (self.origin.x + (col + 0.5) * self.resolution,
                self.origin.y + (row + 0.5) * self.resolution)

    def in_bounds(self, col: int, row: int) -> bool:
        return 0 <= col < self.width and 0 <= row < self.height

    def contains(self, x: float, y: float) -> bool:
        return self.in_bounds(*self.world_to_cell(x, y))

    def occupied_mask(self, threshold: float = 0.5) -> np.ndarray:
        """C-contiguous uint8 mask of cells with probability >= threshold."""
        with np.errstate(invalid="ignore"):
            return np.ascontiguousarray(self.data >= threshold, dtype=np.uint8)

    def unknown_mask(self) -> np.ndarray:
        return np.isnan(self.data)

    def is_free(self, x: float, y: float) -> bool:
        col, row = self.world_to_cell(x, y)
        if not self.in_bounds(col, row):
            return False
        p = self.data[row, col]
        return not math.isnan(p) and p < 0.5

    # -- construction helpers used by the built-in scenarios --

    def _cell_centres(self):
        cols = self.origin.x + (np.arange(self.width) + 0.5) * self.resolution
        rows = self.origin.y + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(cols, rows)

    def fill_rect(self, x0: float, y0: float, x1: float, y1: float, value: float = OCCUPIED) -> None:
        """Set every cell whose centre lies in the axis-aligned box."""
        cx, cy = self._cell_centres()
        self.data[(cx >= x0) & (cx <= x1) & (cy >= y0) & (cy <= y1)] = value

    def fill_disc(self, x: float, y: float, radius: float, value: float = OCCUPIED) -> None:
        cx, cy = self._cell_centres()
        self.data[(cx - x) ** 2 + (cy - y) ** 2 <= radius * radius] = value


def save_map(grid: OccupancyGrid, path) -> None:
    lines = [
        "# diffnav map",
        f"width {grid.width}",
        f"height {grid.height}",
        f"resolution {grid.resolution!r}",
        f"origin {grid.origin.x!r} {grid.origin.y!r} {grid.origin.theta!r}",
    ]
    for row in range(grid.height - 1, -1, -1):
        chars = []
        for p in grid.data[row]:
            if math.isnan(p):
                chars.append("?")
            elif p >= 0.5:
                chars.append("#")
            else:
                chars.append(".")
        lines.append("".join(chars))
    Path(path).write_text("\n".join(lines) + "\n")


def load_map(path) -> OccupancyGrid:
    header = {}
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.rstrip("\n")
        if not line or line.startswith("#") and not set(line) <= set(_CHARS):
            continue
        key = line.split()[0]
        if key in ("width", "height", "resolution", "origin") and len(header) < 4:
            header[key] = line.split()[1:]
            continue
        rows.append(line)
    try:
        width = int(header["width"][0])
        height = int(header["height"][0])
        resolution = float(header["resolution"][0])
        origin = Pose(*(float(v) for v in header["origin"]))
    except (KeyError, IndexError, ValueError) as exc:
        raise ValueError(f"malformed map header in {path}: {exc}") from exc
    if len(rows) != height or any(len(r) != width for r in rows):
        raise ValueError(f"map body in {path} does not match {width}x{height}")
    data = np.empty((height, width))
    for i, line in enumerate(rows):
        try:
            data[height - 1 - i] = [_CHARS[c] for c in line]
        except KeyError as exc:
            raise ValueError(f"unexpected map character {exc} in {path}") from None
    return OccupancyGrid(width, height, resolution, origin, data)

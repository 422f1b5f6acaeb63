"""Pure-Python grid kernels.

Reference implementation of the hot loops. ``_ckernels.pyx`` mirrors every
function here operation for operation so both backends return bit-identical
results; keep them in sync.

Grid convention shared by all kernels: arrays are indexed ``[row, col]``, cell
``(col, row)`` spans ``[ox + col*res, ox + (col+1)*res)`` in x and the same in
y, so row 0 is the bottom (minimum y) of the map.
"""
import heapq
import math

import numpy as np

INF = float("inf")
LETHAL_THRESHOLD = 254

# (drow, dcol) in fixed expansion order
_NEIGHBOURS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


def _boundary_times(g, d, cell, res):
    # distance (m) along the ray to the next cell boundary on one axis
    if d > 0.0:
        return ((cell + 1) - g) * res / d
    if d < 0.0:
        return (cell - g) * res / d
    return INF


def cast_rays(occ, ox, oy, res, x, y, angles, max_range):
    """Distance to the first occupied cell along each world-frame angle.

    Exact cell traversal; the range is the entry distance of the first occupied
    cell, ``max_range`` when none is met or the ray leaves the grid, and 0 when
    the origin cell itself is occupied.
    """
    height, width = occ.shape
    n = len(angles)
    out = np.empty(n, dtype=np.float64)
    gx = (x - ox) / res
    gy = (y - oy) / res
    col0 = int(math.floor(gx))
    row0 = int(math.floor(gy))
    inside = 0 <= col0 < width and 0 <= row0 < height
    for i in range(n):
        if not inside:
            out[i] = max_range
            continue
        dx = math.cos(angles[i])
        dy = math.sin(angles[i])
        col, row = col0, row0
        step_c = 1 if dx > 0.0 else -1
        step_r = 1 if dy > 0.0 else -1
        t = 0.0
        result = max_range
        while True:
            if occ[row, col]:
                result = t if t < max_range else max_range
                break
            tx = _boundary_times(gx, dx, col, res)
            ty = _boundary_times(gy, dy, row, res)
            if tx < ty:
                t = tx
                col += step_c
            else:
                t = ty
                row += step_r
            if t >= max_range:
                break
            if col < 0 or col >= width or row < 0 or row >= height:
                break
        out[i] = result
    return out


def integrate_rays(logodds, observed, ox, oy, res, x, y, angles, ranges, max_range,
                   l_free, l_occ, l_max, hit_depth=0.0):
    """Log-odds update of every cell crossed by each beam (in place).

    Cells fully before the range get ``l_free``; the cell containing the point
    ``hit_depth`` beyond the measured range gets ``l_occ``. A max-range beam
    only marks free every cell entered before ``max_range``. The depth offset
    attributes a return to the surface cell rather than the free cell in front
    of it when the range lands on a cell boundary.
    """
    height, width = logodds.shape
    gx = (x - ox) / res
    gy = (y - oy) / res
    col0 = int(math.floor(gx))
    row0 = int(math.floor(gy))
    if not (0 <= col0 < width and 0 <= row0 < height):
        return
    for i in range(len(angles)):
        r = ranges[i]
        hit = r < max_range
        dx = math.cos(angles[i])
        dy = math.sin(angles[i])
        col, row = col0, row0
        step_c = 1 if dx > 0.0 else -1
        step_r = 1 if dy > 0.0 else -1
        t = 0.0
        while True:
            tx = _boundary_times(gx, dx, col, res)
            ty = _boundary_times(gy, dy, row, res)
            t_exit = tx if tx < ty else ty
            observed[row, col] = 1
            if hit and r + hit_depth < t_exit:
                v = logodds[row, col] + l_occ
                logodds[row, col] = l_max if v > l_max else v
                break
            v = logodds[row, col] + l_free
            logodds[row, col] = -l_max if v < -l_max else v
            if tx < ty:
                col += step_c
            else:
                row += step_r
            t = t_exit
            if not hit and t >= r:
                break
            if col < 0 or col >= width or row < 0 or row >= height:
                break


def endpoint_likelihood(dist, ox, oy, res, x, y, theta, angles, ranges, max_range,
                        sigma, floor):
    """Per-beam geometric mean of the likelihood-field score.

    Each non-max-range beam endpoint scores ``max(exp(-d^2 / 2 sigma^2), floor)``
    where ``d`` is read from the distance field; endpoints off the map score
    ``floor``. Returns 1.0 when every beam is a max-range return.
    """
    height, width = dist.shape
    inv = 1.0 / (2.0 * sigma * sigma)
    log_floor = math.log(floor)
    total = 0.0
    count = 0
    for i in range(len(angles)):
        r = ranges[i]
        if r >= max_range:
            continue
        a = theta + angles[i]
        ex = x + r * math.cos(a)
        ey = y + r * math.sin(a)
        col = int(math.floor((ex - ox) / res))
        row = int(math.floor((ey - oy) / res))
        count += 1
        if col < 0 or col >= width or row < 0 or row >= height:
            total += log_floor
            continue
        d = dist[row, col]
        lp = -(d * d) * inv
        total += lp if lp > log_floor else log_floor
    if count == 0:
        return 1.0
    return math.exp(total / count)


def grid_search(cost, start_row, start_col, goal_row, goal_col, res, penalty, use_heuristic):
    """8-connected best-first search over a cost raster.

    Dijkstra when ``use_heuristic`` is false, A* with the Euclidean heuristic
    otherwise. Cells with cost >= 254 are impassable and diagonal moves need
    both orthogonal neighbours passable. Ties in the open list go to the
    smaller flat index, i.e. smaller (row, col). Returns the flat indices of
    the path from start to goal, or an empty list when the goal is unreachable.
    """
    height, width = cost.shape
    n = height * width
    g = np.full(n, INF)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.uint8)
    diag = res * math.sqrt(2.0)
    start = start_row * width + start_col
    goal = goal_row * width + goal_col
    if cost[start_row, start_col] >= LETHAL_THRESHOLD or cost[goal_row, goal_col] >= LETHAL_THRESHOLD:
        return []
    g[start] = 0.0
    h0 = 0.0
    if use_heuristic:
        dr = start_row - goal_row
        dc = start_col - goal_col
        h0 = math.sqrt(dr * dr + dc * dc) * res
    heap = [(h0, start)]
    found = False
    while heap:
        _, idx = heapq.heappop(heap)
        if closed[idx]:
            continue
        closed[idx] = 1
        if idx == goal:
            found = True
            break
        row = idx // width
        col = idx - row * width
        gi = g[idx]
        for dr, dc in _NEIGHBOURS:
            nr = row + dr
            nc = col + dc
            if nr < 0 or nr >= height or nc < 0 or nc >= width:
                continue
            c = cost[nr, nc]
            if c >= LETHAL_THRESHOLD:
                continue
            if dr != 0 and dc != 0:
                if cost[row, nc] >= LETHAL_THRESHOLD or cost[nr, col] >= LETHAL_THRESHOLD:
                    continue
                step = diag
            else:
                step = res
            nidx = nr * width + nc
            if closed[nidx]:
                continue
            ng = gi + step * (1.0 + penalty * c / 253.0)
            if ng < g[nidx]:
                g[nidx] = ng
                parent[nidx] = idx
                f = ng
                if use_heuristic:
                    hr = nr - goal_row
                    hc = nc - goal_col
                    f = ng + math.sqrt(hr * hr + hc * hc) * res
                heapq.heappush(heap, (f, nidx))
    if not found:
        return []
    path = [goal]
    while path[-1] != start:
        path.append(int(parent[path[-1]]))
    path.reverse()
    return path


def distance_field(occ):
    """Exact Euclidean distance (in cells) from each cell centre to the nearest
    occupied cell centre; ``inf`` everywhere when nothing is occupied."""
    from scipy.ndimage import distance_transform_edt

    occ = np.asarray(occ)
    if not occ.any():
        return np.full(occ.shape, INF)
    return distance_transform_edt(occ == 0)

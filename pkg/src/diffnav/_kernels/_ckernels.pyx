# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled grid kernels; operation-for-operation mirror of ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, floor, exp, log, INFINITY
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair

cnp.import_array()

cdef int LETHAL_THRESHOLD = 254


cdef inline double _boundary_time(double g, double d, long cell, double res) nogil:
    if d > 0.0:
        return ((cell + 1) - g) * res / d
    if d < 0.0:
        return (cell - g) * res / d
    return INFINITY


def cast_rays(const unsigned char[:, ::1] occ, double ox, double oy, double res,
              double x, double y, const double[::1] angles, double max_range):
    cdef Py_ssize_t height = occ.shape[0], width = occ.shape[1]
    cdef Py_ssize_t n = angles.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double gx = (x - ox) / res
    cdef double gy = (y - oy) / res
    cdef long col0 = <long>floor(gx)
    cdef long row0 = <long>floor(gy)
    cdef bint inside = 0 <= col0 < width and 0 <= row0 < height
    cdef double dx, dy, t, tx, ty, result
    cdef long col, row, step_c, step_r
    with nogil:
        for i in range(n):
            if not inside:
                out[i] = max_range
                continue
            dx = cos(angles[i])
            dy = sin(angles[i])
            col = col0
            row = row0
            step_c = 1 if dx > 0.0 else -1
            step_r = 1 if dy > 0.0 else -1
            t = 0.0
            result = max_range
            while True:
                if occ[row, col]:
                    result = t if t < max_range else max_range
                    break
                tx = _boundary_time(gx, dx, col, res)
                ty = _boundary_time(gy, dy, row, res)
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
    return out_arr


def integrate_rays(double[:, ::1] logodds, unsigned char[:, ::1] observed,
                   double ox, double oy, double res, double x, double y,
                   const double[::1] angles, const double[::1] ranges, double max_range,
                   double l_free, double l_occ, double l_max, double hit_depth=0.0):
    cdef Py_ssize_t height = logodds.shape[0], width = logodds.shape[1]
    cdef Py_ssize_t i
    cdef double gx = (x - ox) / res
    cdef double gy = (y - oy) / res
    cdef long col0 = <long>floor(gx)
    cdef long row0 = <long>floor(gy)
    cdef double r, dx, dy, t, tx, ty, t_exit, v
    cdef bint hit
    cdef long col, row, step_c, step_r
    if not (0 <= col0 < width and 0 <= row0 < height):
        return
    with nogil:
        for i in range(angles.shape[0]):
            r = ranges[i]
            hit = r < max_range
            dx = cos(angles[i])
            dy = sin(angles[i])
            col = col0
            row = row0
            step_c = 1 if dx > 0.0 else -1
            step_r = 1 if dy > 0.0 else -1
            t = 0.0
            while True:
                tx = _boundary_time(gx, dx, col, res)
                ty = _boundary_time(gy, dy, row, res)
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


def endpoint_likelihood(const double[:, ::1] dist, double ox, double oy, double res,
                        double x, double y, double theta, const double[::1] angles,
                        const double[::1] ranges, double max_range, double sigma, double floor_p):
    cdef Py_ssize_t height = dist.shape[0], width = dist.shape[1]
    cdef Py_ssize_t i
    cdef double inv = 1.0 / (2.0 * sigma * sigma)
    cdef double log_floor = log(floor_p)
    cdef double total = 0.0, r, a, ex, ey, d, lp
    cdef long count = 0, col, row
    with nogil:
        for i in range(angles.shape[0]):
            r = ranges[i]
            if r >= max_range:
                continue
            a = theta + angles[i]
            ex = x + r * cos(a)
            ey = y + r * sin(a)
            col = <long>floor((ex - ox) / res)
            row = <long>floor((ey - oy) / res)
            count += 1
            if col < 0 or col >= width or row < 0 or row >= height:
                total += log_floor
                continue
            d = dist[row, col]
            lp = -(d * d) * inv
            total += lp if lp > log_floor else log_floor
    if count == 0:
        return 1.0
    return exp(total / count)


def grid_search(const unsigned char[:, ::1] cost, long start_row, long start_col,
                long goal_row, long goal_col, double res, double penalty, bint use_heuristic):
    cdef long height = cost.shape[0], width = cost.shape[1]
    cdef long n = height * width
    g_arr = np.full(n, np.inf)
    parent_arr = np.full(n, -1, dtype=np.int64)
    closed_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] g = g_arr
    cdef long long[::1] parent = parent_arr
    cdef unsigned char[::1] closed = closed_arr
    cdef double diag = res * sqrt(2.0)
    cdef long start = start_row * width + start_col
    cdef long goal = goal_row * width + goal_col
    cdef long idx, row, col, nr, nc, dr, dc, nidx, hr, hc, k
    cdef double gi, ng, f, step, h0 = 0.0
    cdef unsigned char c
    cdef bint found = False
    cdef long[8] DR = [-1, -1, -1, 0, 0, 1, 1, 1]
    cdef long[8] DC = [-1, 0, 1, -1, 1, -1, 0, 1]
    # max-heap on (-f, -idx) == min-heap on (f, idx)
    cdef priority_queue[pair[double, long]] heap
    if cost[start_row, start_col] >= LETHAL_THRESHOLD or cost[goal_row, goal_col] >= LETHAL_THRESHOLD:
        return []
    g[start] = 0.0
    if use_heuristic:
        dr = start_row - goal_row
        dc = start_col - goal_col
        h0 = sqrt(<double>(dr * dr + dc * dc)) * res
    heap.push(pair[double, long](-h0, -start))
    with nogil:
        while not heap.empty():
            idx = -heap.top().second
            heap.pop()
            if closed[idx]:
                continue
            closed[idx] = 1
            if idx == goal:
                found = True
                break
            row = idx // width
            col = idx - row * width
            gi = g[idx]
            for k in range(8):
                dr = DR[k]
                dc = DC[k]
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
                        f = ng + sqrt(<double>(hr * hr + hc * hc)) * res
                    heap.push(pair[double, long](-f, -nidx))
    if not found:
        return []
    path = [goal]
    idx = goal
    while idx != start:
        idx = parent[idx]
        path.append(idx)
    path.reverse()
    return path


def distance_field(const unsigned char[:, ::1] occ):
    """Exact Euclidean distance (in cells) from each cell centre to the nearest
    occupied cell centre; ``inf`` everywhere when nothing is occupied."""
    cdef Py_ssize_t height = occ.shape[0], width = occ.shape[1]
    cdef Py_ssize_t r, c, q, k, m = max(height, width)
    out_arr = np.empty((height, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] col_d2 = np.empty((height, width), dtype=np.float64)
    cdef double[::1] f = np.empty(m, dtype=np.float64)
    cdef long[::1] v = np.empty(m, dtype=np.int64)
    cdef double[::1] z = np.empty(m + 1, dtype=np.float64)
    cdef long[::1] idx = np.empty(m, dtype=np.int64)
    cdef double s, d, big = INFINITY
    cdef long last, n_fin
    with nogil:
        # vertical pass: distance along each column to the nearest occupied cell
        for c in range(width):
            last = -1
            for r in range(height):
                if occ[r, c]:
                    last = r
                col_d2[r, c] = (r - last) if last >= 0 else big
            last = -1
            for r in range(height - 1, -1, -1):
                if occ[r, c]:
                    last = r
                if last >= 0 and (last - r) < col_d2[r, c]:
                    col_d2[r, c] = last - r
            for r in range(height):
                d = col_d2[r, c]
                col_d2[r, c] = d * d
        # horizontal pass: lower envelope of parabolas over the finite entries
        for r in range(height):
            n_fin = 0
            for q in range(width):
                if col_d2[r, q] < big:
                    idx[n_fin] = q
                    f[n_fin] = col_d2[r, q]
                    n_fin += 1
            if n_fin == 0:
                for q in range(width):
                    out[r, q] = big
                continue
            k = 0
            v[0] = 0
            z[0] = -big
            z[1] = big
            for q in range(1, n_fin):
                # z[0] = -inf guarantees termination
                s = ((f[q] + idx[q] * idx[q]) - (f[v[k]] + idx[v[k]] * idx[v[k]])) / (2.0 * (idx[q] - idx[v[k]]))
                while s <= z[k]:
                    k -= 1
                    s = ((f[q] + idx[q] * idx[q]) - (f[v[k]] + idx[v[k]] * idx[v[k]])) / (2.0 * (idx[q] - idx[v[k]]))
                k += 1
                v[k] = q
                z[k] = s
                z[k + 1] = big
            k = 0
            for q in range(width):
                while z[k + 1] < q:
                    k += 1
                d = (q - idx[v[k]])
                out[r, q] = sqrt(d * d + f[v[k]])
    return out_arr

"""Time the grid kernels on each available backend.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``. Every kernel gets
the same inputs on every backend; outputs are checked for equality before
timing so a speedup never hides a divergence.
"""
import argparse
import math
import timeit

import numpy as np

from diffnav._kernels import backends
from diffnav.sim_world import builtin_scenario


def cases():
    grid = builtin_scenario("obstacle_field").grid
    occ = np.ascontiguousarray(grid.occupied_mask(), dtype=np.uint8)
    ox, oy, res = grid.origin.x, grid.origin.y, grid.resolution
    x, y = 1.2, 1.2
    angles = np.linspace(0.0, 2.0 * math.pi, 360, endpoint=False)
    rng = np.random.default_rng(0)
    cost = np.where(rng.random((120, 120)) < 0.2, 254, 0).astype(np.uint8)
    cost[0, 0] = cost[-1, -1] = 0
    ranges = None

    def cast(k):
        return k.cast_rays(occ, ox, oy, res, x, y, angles, 5.0)

    def integrate(k):
        lo = np.zeros(occ.shape)
        seen = np.zeros(occ.shape, dtype=np.uint8)
        k.integrate_rays(lo, seen, ox, oy, res, x, y, angles, ranges, 5.0, -0.4, 0.85, 5.0, 0.5 * res)
        return lo

    def likelihood(k):
        return k.endpoint_likelihood(dist, ox, oy, res, x, y, 0.0, angles, ranges, 5.0, 0.1, 1e-3)

    def astar(k):
        return k.grid_search(cost, 0, 0, 119, 119, 0.05, 2.0, True)

    def dijkstra(k):
        return k.grid_search(cost, 0, 0, 119, 119, 0.05, 2.0, False)

    def edt(k):
        return k.distance_field(occ)

    any_backend = next(iter(backends().values()))
    ranges = np.asarray(cast(any_backend), dtype=np.float64)
    dist = np.asarray(edt(any_backend)) * res
    return {"cast_rays (360 beams)": cast, "integrate_rays (360 beams)": integrate,
            "endpoint_likelihood (360 beams)": likelihood, "grid_search A* 120x120": astar,
            "grid_search Dijkstra 120x120": dijkstra, "distance_field 200x200": edt}


def same(a, b) -> bool:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.array_equal(a, b))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    found = backends()
    names = list(found)
    print(f"{'kernel':34s}" + "".join(f"{n + ' (ms)':>14s}" for n in names) + f"{'speedup':>10s}  equal")
    for label, fn in cases().items():
        outs = {n: fn(k) for n, k in found.items()}
        equal = all(same(outs[names[0]], outs[n]) for n in names[1:])
        times = {}
        for n, k in found.items():
            number = 1
            while timeit.timeit(lambda: fn(k), number=number) < 0.05:
                number *= 2
            times[n] = min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeat)) / number * 1e3
        speed = f"{times['python'] / times['cython']:9.1f}x" if "cython" in times else f"{'n/a':>10s}"
        print(f"{label:34s}" + "".join(f"{times[n]:14.3f}" for n in names) + speed + f"  {equal}")


if __name__ == "__main__":
    main()

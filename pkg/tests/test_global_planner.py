import heapq
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffnav.costmap import INSCRIBED, LETHAL, CostMap, InflationConfig, inflate
from diffnav.global_planner import (GridPath, Unreachable, astar, dijkstra, nearest_free_cell, path_cost,
                                    path_is_clear, to_world_path)
from diffnav.kinematics import Pose


class Surd:
    """Exact a + b*sqrt(2) with rational a and b."""

    def __init__(self, a=Fraction(0), b=Fraction(0)):
        self.a, self.b = Fraction(a), Fraction(b)

    def __add__(self, o):
        return Surd(self.a + o.a, self.b + o.b)

    def __eq__(self, o):
        return self.a == o.a and self.b == o.b

    def __lt__(self, o):
        da, db = self.a - o.a, self.b - o.b
        # sign of da + db*sqrt(2) without rounding
        if da <= 0 and db <= 0:
            return da < 0 or db < 0
        if da >= 0 and db >= 0:
            return False
        s = da * da - 2 * db * db
        return s < 0 if da > 0 else s > 0

    def __float__(self):
        return float(self.a) + math.sqrt(2.0) * float(self.b)


def exact_oracle(cost, start, goal, penalty=2.0):
    """Dijkstra with exact arithmetic in cell units; returns the optimal Surd or None."""
    h, w = cost.shape
    p = Fraction(penalty)
    best = {start: Surd()}
    done = set()
    counter = 0
    heap = [(float(Surd()), counter, start)]
    while heap:
        _, _, cell = heapq.heappop(heap)
        if cell in done:
            continue
        done.add(cell)
        if cell == goal:
            return best[cell]
        c, r = cell
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if not dr and not dc:
                    continue
                nc, nr = c + dc, r + dr
                if not (0 <= nc < w and 0 <= nr < h) or cost[nr, nc] >= INSCRIBED:
                    continue
                if dr and dc and (cost[r, nc] >= INSCRIBED or cost[nr, c] >= INSCRIBED):
                    continue
                wgt = 1 + p * int(cost[nr, nc]) / 253
                step = Surd(0, wgt) if (dr and dc) else Surd(wgt, 0)
                cand = best[cell] + step
                if (nc, nr) not in best or cand < best[(nc, nr)]:
                    best[(nc, nr)] = cand
                    counter += 1
                    heapq.heappush(heap, (float(cand), counter, (nc, nr)))
    return None


def exact_path_cost(cells, cost, penalty=2.0):
    total = Surd()
    for (c0, r0), (c1, r1) in zip(cells, cells[1:]):
        wgt = 1 + Fraction(penalty) * int(cost[r1, c1]) / 253
        total = total + (Surd(0, wgt) if (c0 != c1 and r0 != r1) else Surd(wgt, 0))
    return total


def random_costmap(seed, size=50, density=0.2, res=0.05):
    rng = np.random.default_rng(seed)
    cost = np.where(rng.random((size, size)) < density, LETHAL, 0).astype(np.uint8)
    # graded costs away from obstacles exercise the penalty term
    cm = inflate(CostMap.from_array(cost, res), InflationConfig(0.01, 0.12, 6.0))
    return cm


def free_cells(cm, rng, k=2):
    free = np.argwhere(cm.cost < INSCRIBED)
    pick = free[rng.choice(len(free), k, replace=False)]
    return [(int(c), int(r)) for r, c in pick]


def test_straight_path_on_empty_map():
    cm = CostMap.from_array(np.zeros((10, 10), dtype=np.uint8), 0.05)
    p = astar(cm, (0, 0), (0, 9))
    assert p.cells == tuple((0, r) for r in range(10))
    assert p.total_cost == pytest.approx(9 * 0.05, abs=1e-15)


def test_start_equals_goal():
    cm = CostMap.from_array(np.zeros((5, 5), dtype=np.uint8), 0.05)
    p = astar(cm, (2, 3), (2, 3))
    assert len(p) == 1 and p.total_cost == 0.0


def test_walled_goal_is_unreachable():
    cost = np.zeros((9, 9), dtype=np.uint8)
    cost[3:6, 3] = cost[3:6, 5] = cost[3, 3:6] = cost[5, 3:6] = LETHAL
    cm = CostMap.from_array(cost, 0.05)
    for search in (astar, dijkstra):
        with pytest.raises(Unreachable):
            search(cm, (0, 0), (4, 4))


def test_single_free_cell_map():
    cm = CostMap.from_array(np.zeros((1, 1), dtype=np.uint8), 0.05)
    assert astar(cm, (0, 0), (0, 0)).cells == ((0, 0),)


def test_start_in_collision_is_unreachable():
    cost = np.zeros((3, 3), dtype=np.uint8)
    cost[0, 0] = INSCRIBED
    with pytest.raises(Unreachable):
        astar(CostMap.from_array(cost, 0.05), (0, 0), (2, 2))


def test_no_corner_cutting():
    cost = np.zeros((2, 2), dtype=np.uint8)
    cost[0, 1] = cost[1, 0] = LETHAL
    with pytest.raises(Unreachable):
        astar(CostMap.from_array(cost, 0.05), (0, 0), (1, 1))


def test_world_pose_endpoints():
    cm = CostMap.from_array(np.zeros((10, 10), dtype=np.uint8), 0.1, origin=Pose(1.0, 1.0))
    p = astar(cm, Pose(1.05, 1.05), Pose(1.95, 1.05))
    assert p.cells[0] == (0, 0) and p.cells[-1] == (9, 0)
    with pytest.raises(Unreachable):
        astar(cm, Pose(0.0, 0.0), Pose(1.5, 1.5))


def test_headings():
    cm = CostMap.from_array(np.zeros((10, 10), dtype=np.uint8), 0.1)
    assert to_world_path([(3, 3)], cm)[0].theta == 0.0
    assert all(p.theta == 0.0 for p in to_world_path([(c, 2) for c in range(6)], cm))
    ell = [(c, 0) for c in range(4)] + [(3, r) for r in range(1, 4)]
    headings = [p.theta for p in to_world_path(ell, cm)]
    changes = sum(1 for a, b in zip(headings, headings[1:]) if a != b)
    assert changes == 1


def test_decimation_keeps_endpoints():
    cm = CostMap.from_array(np.zeros((1, 20), dtype=np.uint8), 0.1)
    poses = to_world_path([(c, 0) for c in range(20)], cm, decimate=4)
    assert poses[0].x == pytest.approx(0.05) and poses[-1].x == pytest.approx(1.95)
    assert len(poses) == 6


@pytest.mark.parametrize("seed", range(20))
def test_astar_matches_dijkstra_and_exact_oracle(seed):
    cm = random_costmap(seed)
    rng = np.random.default_rng(1000 + seed)
    s, g = free_cells(cm, rng)
    oracle = exact_oracle(cm.cost, s, g)
    if oracle is None:
        with pytest.raises(Unreachable):
            astar(cm, s, g)
        with pytest.raises(Unreachable):
            dijkstra(cm, s, g)
        return
    a, d = astar(cm, s, g), dijkstra(cm, s, g)
    assert a.total_cost == d.total_cost
    assert exact_path_cost(a.cells, cm.cost) == oracle
    assert exact_path_cost(d.cells, cm.cost) == oracle
    assert a.cells[0] == s and a.cells[-1] == g


@given(st.integers(0, 2 ** 31), st.floats(0.1, 0.35))
def test_astar_equals_dijkstra_property(seed, density):
    cm = random_costmap(seed, size=20, density=density)
    rng = np.random.default_rng(seed)
    s, g = free_cells(cm, rng)
    try:
        a = astar(cm, s, g)
    except Unreachable:
        with pytest.raises(Unreachable):
            dijkstra(cm, s, g)
        return
    assert a.total_cost == dijkstra(cm, s, g).total_cost
    assert path_is_clear(a, cm)


def test_path_cost_rejects_jumps():
    cm = CostMap.from_array(np.zeros((5, 5), dtype=np.uint8), 0.05)
    with pytest.raises(ValueError):
        path_cost([(0, 0), (2, 0)], cm)


def test_path_cost_penalty():
    cost = np.zeros((1, 3), dtype=np.uint8)
    cost[0, 1] = 253
    cm = CostMap.from_array(cost, 0.1)
    assert path_cost([(0, 0), (1, 0), (2, 0)], cm, penalty=2.0) == pytest.approx(0.1 * (3 + 1))


def test_path_is_clear_detects_new_obstacle():
    cost = np.zeros((5, 5), dtype=np.uint8)
    cm = CostMap.from_array(cost, 0.05)
    p = astar(cm, (0, 2), (4, 2))
    blocked = cost.copy()
    blocked[2, 2] = LETHAL
    assert path_is_clear(p, cm) and not path_is_clear(p, CostMap.from_array(blocked, 0.05))


def test_nearest_free_cell():
    cost = np.full((5, 5), LETHAL, dtype=np.uint8)
    cost[4, 1] = 0
    assert nearest_free_cell(CostMap.from_array(cost, 0.05), 0, 0) == (1, 4)
    with pytest.raises(Unreachable):
        nearest_free_cell(CostMap.from_array(np.full((2, 2), LETHAL, dtype=np.uint8), 0.05), 0, 0)

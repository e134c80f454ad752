"""A* routes over the occupancy grid with occupancy probability as cost.

Entering a cell costs ``1 + 10 * p``. Costs are carried as integers in units of
1e-6 so that equal-cost routes sum to bit-identical totals whatever order the
search visits them in.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .mapping import CellClass, CellCoord, OccupancyGrid
from .world import OutOfBoundsError

COST_WEIGHT = 10.0
COST_SCALE = 1_000_000


@dataclass(frozen=True)
class Route:
    cells: tuple[CellCoord, ...]
    total_cost: float

    def __len__(self):
        return len(self.cells)

    @property
    def goal(self) -> CellCoord:
        return self.cells[-1]


def entry_cost_units(grid: OccupancyGrid) -> np.ndarray:
    """Integer cost of entering each cell; -1 marks impassable (Occupied) cells."""
    p = grid.probabilities()
    units = np.rint((1.0 + COST_WEIGHT * p) * COST_SCALE).astype(np.int64)
    units[grid.classes() == CellClass.OCCUPIED] = -1
    return units


def plan_route(grid: OccupancyGrid, start, goal, costs: np.ndarray | list | None = None) -> Route | None:
    """Minimal-cost 4-connected route from start to goal, or None if unreachable.

    `costs` may be passed to reuse a precomputed `entry_cost_units` field,
    either as the (rows, cols) array or already flattened row-major to a list.
    """
    for name, c in (("start", start), ("goal", goal)):
        if not grid.in_bounds(c):
            raise OutOfBoundsError(f"{name} {tuple(c)} outside {grid.cols}x{grid.rows} grid")
    if costs is None:
        costs = entry_cost_units(grid)
    cols, rows = grid.cols, grid.rows
    sc, sr = start
    gc, gr = goal
    flat = costs if isinstance(costs, list) else costs.ravel().tolist()
    if flat[gr * cols + gc] < 0:
        return None
    if (sc, sr) == (gc, gr):
        return Route((CellCoord(sc, sr),), 0.0)

    s = sr * cols + sc
    g_idx = gr * cols + gc
    best = {s: 0}
    parent = {s: -1}
    closed = set()
    h0 = abs(sc - gc) + abs(sr - gr)
    # (f, h, row-major index): ties broken by lower f, then h, then row-major order
    heap = [(h0 * COST_SCALE, h0, s)]
    while heap:
        f, h, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == g_idx:
            break
        closed.add(cur)
        g_cur = best[cur]
        r, c = divmod(cur, cols)
        for nr, nc in ((r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)):
            if nr < 0 or nc < 0 or nr >= rows or nc >= cols:
                continue
            nxt = nr * cols + nc
            step = flat[nxt]
            if step < 0 or nxt in closed:
                continue
            g_new = g_cur + step
            if g_new < best.get(nxt, g_new + 1):
                best[nxt] = g_new
                parent[nxt] = cur
                h_new = abs(nc - gc) + abs(nr - gr)
                heapq.heappush(heap, (g_new + h_new * COST_SCALE, h_new, nxt))
    else:
        return None

    path = []
    node = g_idx
    while node != -1:
        r, c = divmod(node, cols)
        path.append(CellCoord(c, r))
        node = parent[node]
    path.reverse()
    return Route(tuple(path), best[g_idx] / COST_SCALE)

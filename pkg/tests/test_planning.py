import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from teamexplore.mapping import CellClass, OccupancyGrid
from teamexplore.planning import COST_SCALE, entry_cost_units, plan_route
from teamexplore.world import OutOfBoundsError

OCC = 5.0  # log-odds well above the Occupied threshold
FREE = -5.0


def dijkstra_cost(grid, start, goal):
    """Shortest entering-cost path on the 4-connected cell graph, via scipy."""
    units = entry_cost_units(grid)
    rows, cols = units.shape
    src, dst, w = [], [], []
    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nr, nc = r + dr, c + dc
                if 0 <= nr < rows and 0 <= nc < cols and units[nr, nc] >= 0 and units[r, c] >= 0:
                    src.append(r * cols + c)
                    dst.append(nr * cols + nc)
                    w.append(units[nr, nc])
    n = rows * cols
    g = csr_matrix((np.array(w, dtype=np.float64), (src, dst)), shape=(n, n))
    d = dijkstra(g, indices=start[1] * cols + start[0])
    out = d[goal[1] * cols + goal[0]]
    return None if np.isinf(out) else int(out)


def random_grid(rng, n=15, p_occ=0.25):
    # passable cells span Free and Unknown probabilities
    lo = rng.uniform(-3, 0.6, (n, n))
    lo[rng.random((n, n)) < p_occ] = OCC
    return OccupancyGrid(n, n, 0.5, lo)


def route_cost_units(grid, route):
    units = entry_cost_units(grid)
    return sum(int(units[r, c]) for c, r in route.cells[1:])


class TestExamples:
    def test_start_equals_goal(self):
        route = plan_route(OccupancyGrid(5, 5), (2, 3), (2, 3))
        assert route.cells == ((2, 3),)
        assert route.total_cost == 0

    def test_open_grid_straight_route(self):
        grid = OccupancyGrid(10, 10)
        route = plan_route(grid, (0, 0), (3, 0))
        assert route.total_cost == pytest.approx(18.0, abs=1e-9)
        assert dijkstra_cost(grid, (0, 0), (3, 0)) == 18 * COST_SCALE
        assert route.cells == ((0, 0), (1, 0), (2, 0), (3, 0))

    def test_wall_with_gap(self):
        lo = np.zeros((9, 9))
        lo[:, 4] = OCC
        lo[6, 4] = 0.0
        grid = OccupancyGrid(9, 9, 0.5, lo)
        route = plan_route(grid, (0, 0), (8, 0))
        assert (4, 6) in route.cells
        assert round(route.total_cost * COST_SCALE) == dijkstra_cost(grid, (0, 0), (8, 0))

    def test_occupied_goal_is_none(self):
        lo = np.zeros((4, 4))
        lo[2, 2] = OCC
        assert plan_route(OccupancyGrid(4, 4, 0.5, lo), (0, 0), (2, 2)) is None

    def test_walled_off_goal_is_none(self):
        lo = np.zeros((5, 5))
        lo[:, 2] = OCC
        grid = OccupancyGrid(5, 5, 0.5, lo)
        assert plan_route(grid, (0, 0), (4, 4)) is None
        assert dijkstra_cost(grid, (0, 0), (4, 4)) is None

    @pytest.mark.parametrize("start, goal", [((-1, 0), (1, 1)), ((0, 0), (5, 0)), ((0, 0), (0, 5))])
    def test_out_of_bounds(self, start, goal):
        with pytest.raises(OutOfBoundsError):
            plan_route(OccupancyGrid(5, 5), start, goal)

    def test_prefers_free_over_unknown(self):
        # free corridor along row 2 costs less than the straight unknown row 0
        lo = np.zeros((3, 6))
        lo[2, :] = FREE
        lo[1, 0] = FREE
        lo[1, 5] = FREE
        grid = OccupancyGrid(6, 3, 0.5, lo)
        route = plan_route(grid, (0, 0), (5, 0))
        assert all(c[1] == 2 for c in route.cells[3:-3])


class TestProperties:
    def test_matches_dijkstra_on_random_grids(self):
        rng = np.random.default_rng(11)
        reachable = 0
        for _ in range(100):
            grid = random_grid(rng)
            classes = grid.classes()
            free_cells = np.argwhere(classes != CellClass.OCCUPIED)
            sr, sc = free_cells[rng.integers(len(free_cells))]
            gc, gr = rng.integers(0, 15, 2)
            route = plan_route(grid, (sc, sr), (gc, gr))
            oracle = dijkstra_cost(grid, (sc, sr), (gc, gr))
            if classes[gr, gc] == CellClass.OCCUPIED:
                oracle = None
            assert (route is None) == (oracle is None)
            if route is not None:
                reachable += 1
                assert round(route.total_cost * COST_SCALE) == oracle
                assert route_cost_units(grid, route) == oracle
        assert reachable > 20

    def test_route_shape(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            grid = random_grid(rng, 12)
            classes = grid.classes()
            free_cells = np.argwhere(classes != CellClass.OCCUPIED)
            (sr, sc), (gr, gc) = free_cells[rng.choice(len(free_cells), 2, replace=False)]
            route = plan_route(grid, (sc, sr), (gc, gr))
            if route is None:
                continue
            assert route.cells[0] == (sc, sr) and route.cells[-1] == (gc, gr)
            for (c0, r0), (c1, r1) in zip(route.cells, route.cells[1:]):
                assert abs(c0 - c1) + abs(r0 - r1) == 1
            assert all(classes[r, c] != CellClass.OCCUPIED for c, r in route.cells)

    def test_deterministic_and_cost_field_reuse(self):
        grid = random_grid(np.random.default_rng(13))
        costs = entry_cost_units(grid)
        a = plan_route(grid, (0, 0), (14, 14))
        b = plan_route(grid, (0, 0), (14, 14), costs)
        c = plan_route(grid, (0, 0), (14, 14), costs.ravel().tolist())
        assert a == b == c

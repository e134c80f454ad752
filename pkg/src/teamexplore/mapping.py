"""Log-odds occupancy grid over 0.5 m cells, frontiers, and map fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .world import SENSOR_RANGE, OutOfBoundsError, Pose, ScanResult

CELL_SIZE = 0.5
L_FREE = -0.4
L_OCC = 0.85
L_CLAMP = 10.0
P_FREE_MAX = 0.35
P_OCC_MIN = 0.65

# nudge past a hit point so the occupied increment lands in the obstacle's cell,
# not the free cell whose boundary the ray stopped on
HIT_NUDGE = 1e-6


class CellClass(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


class CellCoord(NamedTuple):
    col: int
    row: int


def probability(log_odds):
    return 1.0 / (1.0 + np.exp(-np.asarray(log_odds, dtype=float)))


@dataclass
class OccupancyGrid:
    cols: int
    rows: int
    cell_size: float = CELL_SIZE
    log_odds: np.ndarray | None = None  # shape (rows, cols)

    def __post_init__(self):
        if self.log_odds is None:
            self.log_odds = np.zeros((self.rows, self.cols))
        elif self.log_odds.shape != (self.rows, self.cols):
            raise ValueError(
                f"log_odds shape {self.log_odds.shape} != ({self.rows}, {self.cols})"
            )

    @classmethod
    def for_extent(cls, width_m: float, height_m: float, cell_size: float = CELL_SIZE) -> OccupancyGrid:
        cols = int(math.ceil(width_m / cell_size - 1e-9))
        rows = int(math.ceil(height_m / cell_size - 1e-9))
        return cls(cols, rows, cell_size)

    def copy(self) -> OccupancyGrid:
        return OccupancyGrid(self.cols, self.rows, self.cell_size, self.log_odds.copy())

    def in_bounds(self, cell) -> bool:
        col, row = cell
        return 0 <= col < self.cols and 0 <= row < self.rows

    def cell_of(self, x: float, y: float) -> CellCoord:
        """Cell containing a metric point; points on the far border map inward."""
        col = min(int(math.floor(x / self.cell_size)), self.cols - 1)
        row = min(int(math.floor(y / self.cell_size)), self.rows - 1)
        return CellCoord(col, row)

    def center_of(self, cell) -> tuple[float, float]:
        return ((cell[0] + 0.5) * self.cell_size, (cell[1] + 0.5) * self.cell_size)

    def probabilities(self) -> np.ndarray:
        return probability(self.log_odds)

    def classes(self) -> np.ndarray:
        """CellClass codes for every cell, shape (rows, cols)."""
        p = self.probabilities()
        out = np.full(p.shape, CellClass.UNKNOWN, dtype=np.int8)
        out[p <= P_FREE_MAX] = CellClass.FREE
        out[p >= P_OCC_MIN] = CellClass.OCCUPIED
        return out


def classify_probability(p: float) -> CellClass:
    if p >= P_OCC_MIN:
        return CellClass.OCCUPIED
    if p <= P_FREE_MAX:
        return CellClass.FREE
    return CellClass.UNKNOWN


def classify(grid: OccupancyGrid, cell) -> CellClass:
    if not grid.in_bounds(cell):
        raise OutOfBoundsError(f"cell {tuple(cell)} outside {grid.cols}x{grid.rows} grid")
    return classify_probability(float(probability(grid.log_odds[cell[1], cell[0]])))


def supercover(x0: float, y0: float, x1: float, y1: float, cell_size: float = CELL_SIZE) -> list[tuple[int, int]]:
    """Every (col, row) cell the segment p0-p1 touches, in traversal order.

    When the segment crosses a grid corner exactly, both side cells are included.
    """
    cx, cy = int(math.floor(x0 / cell_size)), int(math.floor(y0 / cell_size))
    dx, dy = x1 - x0, y1 - y0
    cells = [(cx, cy)]

    if dx > 0.0:
        sx, tmx, tdx = 1, ((cx + 1) * cell_size - x0) / dx, cell_size / dx
    elif dx < 0.0:
        sx, tmx, tdx = -1, (cx * cell_size - x0) / dx, -cell_size / dx
    else:
        sx, tmx, tdx = 0, math.inf, math.inf
    if dy > 0.0:
        sy, tmy, tdy = 1, ((cy + 1) * cell_size - y0) / dy, cell_size / dy
    elif dy < 0.0:
        sy, tmy, tdy = -1, (cy * cell_size - y0) / dy, -cell_size / dy
    else:
        sy, tmy, tdy = 0, math.inf, math.inf

    while min(tmx, tmy) <= 1.0:
        if abs(tmx - tmy) <= 1e-12:
            cells.append((cx + sx, cy))
            cells.append((cx, cy + sy))
            cx += sx
            cy += sy
            tmx += tdx
            tmy += tdy
        elif tmx < tmy:
            cx += sx
            tmx += tdx
        else:
            cy += sy
            tmy += tdy
        cells.append((cx, cy))
    return cells


def scan_deltas(grid: OccupancyGrid, pose: Pose, scan: ScanResult) -> np.ndarray:
    """Log-odds increments a scan contributes, before clamping."""
    delta = np.zeros_like(grid.log_odds)
    for ray in scan.rays:
        bearing = pose.theta + ray.bearing_offset
        ux, uy = math.cos(bearing), math.sin(bearing)
        hit_cell = None
        if ray.hit_distance is None:
            length = SENSOR_RANGE
        else:
            length = ray.hit_distance + HIT_NUDGE
            hx, hy = pose.x + length * ux, pose.y + length * uy
            hit_cell = (int(math.floor(hx / grid.cell_size)), int(math.floor(hy / grid.cell_size)))
        end_x, end_y = pose.x + length * ux, pose.y + length * uy
        for c in dict.fromkeys(supercover(pose.x, pose.y, end_x, end_y, grid.cell_size)):
            if c == hit_cell or not grid.in_bounds(c):
                continue
            delta[c[1], c[0]] += L_FREE
        if hit_cell is not None and grid.in_bounds(hit_cell):
            delta[hit_cell[1], hit_cell[0]] += L_OCC
    return delta


def integrate_scan(grid: OccupancyGrid, pose: Pose, scan: ScanResult) -> OccupancyGrid:
    """Add one scan's log-odds increments to `grid` in place and return it."""
    if not (0.0 <= pose.x <= grid.cols * grid.cell_size and 0.0 <= pose.y <= grid.rows * grid.cell_size):
        raise OutOfBoundsError(f"pose ({pose.x:.3f}, {pose.y:.3f}) outside grid extents")
    if not scan.rays:
        return grid
    grid.log_odds += scan_deltas(grid, pose, scan)
    np.clip(grid.log_odds, -L_CLAMP, L_CLAMP, out=grid.log_odds)
    return grid


def frontier_mask(classes: np.ndarray) -> np.ndarray:
    """Free cells with at least one Unknown 4-neighbor."""
    unknown = classes == CellClass.UNKNOWN
    near = np.zeros_like(unknown)
    near[1:, :] |= unknown[:-1, :]
    near[:-1, :] |= unknown[1:, :]
    near[:, 1:] |= unknown[:, :-1]
    near[:, :-1] |= unknown[:, 1:]
    return (classes == CellClass.FREE) & near


def detect_frontiers(grid: OccupancyGrid) -> list[CellCoord]:
    rows, cols = np.nonzero(frontier_mask(grid.classes()))
    # np.nonzero already walks row-major
    return [CellCoord(int(c), int(r)) for r, c in zip(rows, cols)]


def neighbor_counts(mask: np.ndarray) -> np.ndarray:
    """Per-cell count of True cells among the in-bounds 8-neighbors."""
    padded = np.pad(mask.astype(np.int16), 1)
    rows, cols = mask.shape
    total = np.zeros(mask.shape, dtype=np.int16)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            total += padded[1 + dr : 1 + dr + rows, 1 + dc : 1 + dc + cols]
    return total


def neighborhood_features(grid: OccupancyGrid, cell, frontier_set: Iterable) -> tuple[int, int]:
    """(frontier neighbors, occupied neighbors) over the 8-connected neighborhood."""
    frontier_set = frontier_set if isinstance(frontier_set, (set, frozenset)) else set(frontier_set)
    col, row = cell
    n_frontier = n_occupied = 0
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            nb = CellCoord(col + dc, row + dr)
            if not grid.in_bounds(nb):
                continue
            if nb in frontier_set:
                n_frontier += 1
            if classify(grid, nb) is CellClass.OCCUPIED:
                n_occupied += 1
    return n_frontier, n_occupied


def fuse(a: OccupancyGrid, b: OccupancyGrid) -> OccupancyGrid:
    if (a.cols, a.rows) != (b.cols, b.rows) or a.cell_size != b.cell_size:
        raise ValueError(
            f"cannot fuse {a.cols}x{a.rows}@{a.cell_size} with {b.cols}x{b.rows}@{b.cell_size}"
        )
    return OccupancyGrid(
        a.cols, a.rows, a.cell_size, np.clip(a.log_odds + b.log_odds, -L_CLAMP, L_CLAMP)
    )


PGM_LEVEL = {CellClass.OCCUPIED: 0, CellClass.UNKNOWN: 128, CellClass.FREE: 255}


def write_pgm(grid: OccupancyGrid, path: str | Path) -> None:
    """Binary P5 snapshot, one byte per cell, grid row 0 written first (top)."""
    classes = grid.classes()
    img = np.empty(classes.shape, dtype=np.uint8)
    for cls, level in PGM_LEVEL.items():
        img[classes == cls] = level
    header = f"P5\n{grid.cols} {grid.rows}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)


def write_frontier_csv(frontiers: Iterable, path: str | Path) -> None:
    lines = ["col,row"] + [f"{c},{r}" for c, r in frontiers]
    Path(path).write_text("\n".join(lines) + "\n")

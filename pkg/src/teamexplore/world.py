"""Ground-truth 2D world and the 9-ray range sensor.

Worlds are written as ASCII documents where each character is a 0.5 m block:

    #  obstacle
    .  free
    C  charging station (free)
    S  spawn cell (free)

Row 0 of the document is the row of blocks nearest y = 0; column 0 is at x = 0.
Internally each block expands to 5x5 fine cells of 0.1 m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FINE_CELL = 0.1
FINE_PER_METER = 10
BLOCK_SIZE = 0.5
FINE_PER_BLOCK = 5

SENSOR_RANGE = 1.0
SENSOR_HALF_FAN = math.radians(70.0)
N_RAYS = 9
RAY_OFFSETS = tuple(float(a) for a in np.linspace(-SENSOR_HALF_FAN, SENSOR_HALF_FAN, N_RAYS))

TWO_PI = 2.0 * math.pi


class MapFormatError(ValueError):
    """Raised when an ASCII world document is malformed."""


class OutOfBoundsError(ValueError):
    """Raised when a pose or cell lies outside the map."""


def normalize_angle(theta: float) -> float:
    """Wrap an angle into [0, 2*pi)."""
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    if t >= TWO_PI:
        t = 0.0
    return t


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))


@dataclass(frozen=True)
class Ray:
    bearing_offset: float
    hit_distance: float | None


@dataclass(frozen=True)
class ScanResult:
    rays: tuple[Ray, ...]


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass
class EnvironmentMap:
    width_m: float
    height_m: float
    obstacle_grid: np.ndarray  # bool, indexed [iy, ix] at 0.1 m
    charging_stations: list[tuple[float, float]] = field(default_factory=list)
    spawn_region: Rect | None = None

    @property
    def fine_shape(self) -> tuple[int, int]:
        return self.obstacle_grid.shape

    def inside(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width_m and 0.0 <= y <= self.height_m

    def fine_index(self, x: float, y: float) -> tuple[int, int]:
        """(ix, iy) of the fine cell containing a point; points on the far border map inward."""
        ny, nx = self.obstacle_grid.shape
        ix = min(int(math.floor(x * FINE_PER_METER)), nx - 1)
        iy = min(int(math.floor(y * FINE_PER_METER)), ny - 1)
        return ix, iy

    def is_obstacle_at(self, x: float, y: float) -> bool:
        if not self.inside(x, y):
            return True
        ix, iy = self.fine_index(x, y)
        return bool(self.obstacle_grid[iy, ix])

    def disc_collides(self, x: float, y: float, radius: float) -> bool:
        """True if a disc overlaps an obstacle fine cell or leaves the map."""
        if x - radius < 0.0 or y - radius < 0.0:
            return True
        if x + radius > self.width_m or y + radius > self.height_m:
            return True
        ny, nx = self.obstacle_grid.shape
        ix0 = max(int(math.floor((x - radius) * FINE_PER_METER)), 0)
        ix1 = min(int(math.floor((x + radius) * FINE_PER_METER)), nx - 1)
        iy0 = max(int(math.floor((y - radius) * FINE_PER_METER)), 0)
        iy1 = min(int(math.floor((y + radius) * FINE_PER_METER)), ny - 1)
        r2 = radius * radius
        for iy in range(iy0, iy1 + 1):
            for ix in range(ix0, ix1 + 1):
                if not self.obstacle_grid[iy, ix]:
                    continue
                # closest point of the cell to the disc center
                cx = min(max(x, ix / FINE_PER_METER), (ix + 1) / FINE_PER_METER)
                cy = min(max(y, iy / FINE_PER_METER), (iy + 1) / FINE_PER_METER)
                if (cx - x) ** 2 + (cy - y) ** 2 < r2:
                    return True
        return False


def load_environment(text: str) -> EnvironmentMap:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MapFormatError("line 1: empty map document")
    n_cols = len(lines[0])
    if n_cols == 0:
        raise MapFormatError("line 1, column 1: empty row")
    n_rows = len(lines)

    blocks = np.zeros((n_rows, n_cols), dtype=bool)
    stations: list[tuple[float, float]] = []
    spawn: list[tuple[int, int]] = []
    for row, line in enumerate(lines):
        if len(line) != n_cols:
            raise MapFormatError(
                f"line {row + 1}, column {min(len(line), n_cols) + 1}: "
                f"ragged row (expected {n_cols} characters, got {len(line)})"
            )
        for col, ch in enumerate(line):
            if ch == "#":
                blocks[row, col] = True
            elif ch == "C":
                stations.append(((col + 0.5) * BLOCK_SIZE, (row + 0.5) * BLOCK_SIZE))
            elif ch == "S":
                spawn.append((col, row))
            elif ch != ".":
                raise MapFormatError(f"line {row + 1}, column {col + 1}: unknown character {ch!r}")
    if not spawn:
        raise MapFormatError(f"line {n_rows}, column {n_cols}: no spawn cell 'S' in map")

    cols = [c for c, _ in spawn]
    rows = [r for _, r in spawn]
    region = Rect(
        min(cols) * BLOCK_SIZE,
        min(rows) * BLOCK_SIZE,
        (max(cols) + 1) * BLOCK_SIZE,
        (max(rows) + 1) * BLOCK_SIZE,
    )
    fine = np.repeat(np.repeat(blocks, FINE_PER_BLOCK, axis=0), FINE_PER_BLOCK, axis=1)
    return EnvironmentMap(
        width_m=n_cols * BLOCK_SIZE,
        height_m=n_rows * BLOCK_SIZE,
        obstacle_grid=fine,
        charging_stations=stations,
        spawn_region=region,
    )


def load_environment_file(path: str | Path) -> EnvironmentMap:
    return load_environment(Path(path).read_text())


def raycast(env: EnvironmentMap, origin: Pose, bearing: float, max_range: float) -> float | None:
    """Distance along `bearing` to the first obstacle fine-cell boundary, or None past max_range.

    Exact grid traversal over the 0.1 m cells; the map border is solid.
    """
    x0, y0 = origin.x, origin.y
    if not env.inside(x0, y0):
        raise OutOfBoundsError(f"ray origin ({x0:.3f}, {y0:.3f}) outside map")
    ny, nx = env.obstacle_grid.shape
    grid = env.obstacle_grid
    dx, dy = math.cos(bearing), math.sin(bearing)
    ix, iy = env.fine_index(x0, y0)
    if grid[iy, ix]:
        return 0.0

    if dx > 0.0:
        step_x, t_max_x, t_dx = 1, ((ix + 1) / FINE_PER_METER - x0) / dx, FINE_CELL / dx
    elif dx < 0.0:
        step_x, t_max_x, t_dx = -1, (ix / FINE_PER_METER - x0) / dx, -FINE_CELL / dx
    else:
        step_x, t_max_x, t_dx = 0, math.inf, math.inf
    if dy > 0.0:
        step_y, t_max_y, t_dy = 1, ((iy + 1) / FINE_PER_METER - y0) / dy, FINE_CELL / dy
    elif dy < 0.0:
        step_y, t_max_y, t_dy = -1, (iy / FINE_PER_METER - y0) / dy, -FINE_CELL / dy
    else:
        step_y, t_max_y, t_dy = 0, math.inf, math.inf

    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            ix += step_x
            t_max_x += t_dx
        else:
            t = t_max_y
            iy += step_y
            t_max_y += t_dy
        if t > max_range:
            return None
        if ix < 0 or iy < 0 or ix >= nx or iy >= ny or grid[iy, ix]:
            return max(t, 0.0)


def sense(env: EnvironmentMap, pose: Pose) -> ScanResult:
    rays = tuple(
        Ray(off, raycast(env, pose, pose.theta + off, SENSOR_RANGE)) for off in RAY_OFFSETS
    )
    return ScanResult(rays)

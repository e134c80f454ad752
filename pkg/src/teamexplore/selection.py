"""Target selection for team leaders: cell records, the quantile sampler, and LLM selection."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .llm import ChatClient, TransportError
from .mapping import CellClass, CellCoord, OccupancyGrid, frontier_mask, neighbor_counts
from .world import Pose

LABEL_FREE = 1
LABEL_OCCUPIED = 2
LABEL_FRONTIER = 3

MAX_CONTEXT_CELLS = 150
QUANTILE_SD = 0.02
MAX_RETRIES = 5
MAX_ATTEMPTS = 1 + MAX_RETRIES


class NoFrontierError(RuntimeError):
    """No frontier cell is left to select."""


@dataclass(frozen=True)
class CellRecord:
    coord: CellCoord
    label: int
    n_frontier_neighbors: int
    n_occupied_neighbors: int
    distance: float


@dataclass(frozen=True)
class OtherTeam:
    team_id: int
    leader_position: Pose
    target: CellCoord | None


@dataclass(frozen=True)
class SelectionContext:
    cell_records: tuple[CellRecord, ...]
    leader_position: Pose
    other_teams: tuple[OtherTeam, ...] = ()
    cell_size: float = 0.5

    def frontier_records(self) -> list[CellRecord]:
        return [r for r in self.cell_records if r.label == LABEL_FRONTIER]

    def record_for(self, cell) -> CellRecord | None:
        cell = tuple(cell)
        for r in self.cell_records:
            if r.coord == cell:
                return r
        return None


@dataclass(frozen=True)
class TargetDecision:
    target: CellCoord
    method: str  # "baseline" | "llm" | "llm_fallback"
    attempts: int = 0
    rationale_text: str = ""


@dataclass
class MapFeatures:
    """Per-step derived map layers shared by every leader's context."""

    classes: np.ndarray
    frontier: np.ndarray
    n_frontier: np.ndarray
    n_occupied: np.ndarray
    frontiers: list[CellCoord] = field(default_factory=list)

    @classmethod
    def from_grid(cls, grid: OccupancyGrid) -> MapFeatures:
        classes = grid.classes()
        frontier = frontier_mask(classes)
        rows, cols = np.nonzero(frontier)
        return cls(
            classes=classes,
            frontier=frontier,
            n_frontier=neighbor_counts(frontier),
            n_occupied=neighbor_counts(classes == CellClass.OCCUPIED),
            frontiers=[CellCoord(int(c), int(r)) for r, c in zip(rows, cols)],
        )


def _records(mask, label, features, leader, cell_size, limit=None) -> list[CellRecord]:
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        return []
    d = np.hypot((cols + 0.5) * cell_size - leader.x, (rows + 0.5) * cell_size - leader.y)
    # stable sort by distance keeps row-major order among ties
    order = np.argsort(d, kind="stable")
    if limit is not None:
        order = order[:limit]
    return [
        CellRecord(
            CellCoord(int(cols[i]), int(rows[i])),
            label,
            int(features.n_frontier[rows[i], cols[i]]),
            int(features.n_occupied[rows[i], cols[i]]),
            float(d[i]),
        )
        for i in order
    ]


def build_context(
    grid: OccupancyGrid,
    frontiers: Iterable | None,
    leader: Pose,
    other_teams: Sequence[OtherTeam] = (),
    features: MapFeatures | None = None,
) -> SelectionContext:
    """Cell records for one leader: all frontiers, plus the nearest free and occupied cells.

    `frontiers` defaults to those derived from the grid; pass precomputed
    `features` to avoid recomputing the map layers for each team.
    """
    if features is None:
        features = MapFeatures.from_grid(grid)
    if frontiers is None:
        fmask = features.frontier
    else:
        fmask = np.zeros((grid.rows, grid.cols), dtype=bool)
        for c, r in frontiers:
            fmask[r, c] = True
    free = (features.classes == CellClass.FREE) & ~fmask
    occupied = features.classes == CellClass.OCCUPIED
    cs = grid.cell_size
    records = (
        _records(fmask, LABEL_FRONTIER, features, leader, cs)
        + _records(free, LABEL_FREE, features, leader, cs, MAX_CONTEXT_CELLS)
        + _records(occupied, LABEL_OCCUPIED, features, leader, cs, MAX_CONTEXT_CELLS)
    )
    return SelectionContext(tuple(records), leader, tuple(other_teams), cs)


def nearest_rank(q: float, n: int) -> int:
    """Index of quantile q among n sorted items, rounding half up."""
    return int(math.floor(q * (n - 1) + 0.5))


def baseline_select(
    frontiers_with_distance: Sequence[tuple[CellCoord, float]],
    bias: float,
    rng: np.random.Generator,
) -> CellCoord:
    """Frontier at a sampled distance quantile q ~ clip(Normal(bias, 0.02), 0, 1)."""
    if not frontiers_with_distance:
        raise NoFrontierError("no frontier cells to select from")
    ordered = sorted(frontiers_with_distance, key=lambda fd: (fd[1], fd[0][1], fd[0][0]))
    q = float(np.clip(rng.normal(bias, QUANTILE_SD), 0.0, 1.0))
    return CellCoord(*ordered[nearest_rank(q, len(ordered))][0])


def _cell(c) -> str:
    return f"({c[0]},{c[1]})"


def render_prompt(ctx: SelectionContext) -> str:
    lp = ctx.leader_position
    cs = ctx.cell_size
    own_cell = (int(lp.x // cs), int(lp.y // cs))
    lines = [
        "You are the leader of a team of robots exploring an unknown 2D environment "
        "mapped as an occupancy grid of square cells.",
        "Choose the team's next target: one frontier cell (label 3) that makes exploration efficient.",
        "Prefer frontier cells with more frontier neighbours (nf) and fewer obstacle neighbours (no), "
        "avoid cells other teams already target, and take the distance (d, metres) into account.",
        "",
        "Cell labels: 1 = explored free cell, 2 = explored obstacle cell, 3 = frontier cell.",
        "nf / no = number of frontier / obstacle cells among the 8 neighbouring cells.",
        "",
        f"Your team position: cell {_cell(own_cell)} at x={lp.x:.2f} m, y={lp.y:.2f} m",
        "",
        "Other teams:",
    ]
    if not ctx.other_teams:
        lines.append("none")
    for t in ctx.other_teams:
        p = t.leader_position
        pc = (int(p.x // cs), int(p.y // cs))
        tgt = f"target {_cell(t.target)}" if t.target is not None else "target none"
        lines.append(f"team {t.team_id}: position cell {_cell(pc)} at x={p.x:.2f} m, y={p.y:.2f} m, {tgt}")
    lines += ["", "Cells:"]
    for r in ctx.cell_records:
        lines.append(
            f"{_cell(r.coord)} label={r.label} nf={r.n_frontier_neighbors} "
            f"no={r.n_occupied_neighbors} d={r.distance:.2f}"
        )
    lines += ["", "Reply with reasoning, then a final line exactly: TARGET: (col,row)"]
    return "\n".join(lines) + "\n"


TARGET_LINE = re.compile(r"^\s*TARGET:\s*\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)\s*$")


def parse_response(text: str) -> CellCoord | None:
    """Coordinate from the last `TARGET: (col,row)` line, or None if there is none."""
    found = None
    for line in text.splitlines():
        m = TARGET_LINE.match(line)
        if m:
            found = CellCoord(int(m.group(1)), int(m.group(2)))
    return found


def llm_select(
    ctx: SelectionContext,
    client: ChatClient,
    frontier_set,
    baseline_fallback: Callable[[], CellCoord],
) -> TargetDecision:
    """Ask the model up to 1 + 5 times for a frontier cell, then fall back to the baseline."""
    prompt = render_prompt(ctx)
    for attempt in range(1, MAX_ATTEMPTS + 1):
        try:
            reply = client.complete(prompt)
        except TransportError:
            continue
        target = parse_response(reply)
        if target is not None and target in frontier_set:
            return TargetDecision(target, "llm", attempt, reply)
    return TargetDecision(baseline_fallback(), "llm_fallback", MAX_ATTEMPTS, "")

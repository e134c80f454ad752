"""Deterministic step loop: sense, fuse, team upkeep, target selection, planning, motion."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from threading import Lock

import numpy as np

from .agents import (
    ROBOT_RADIUS,
    Action,
    Mode,
    RobotState,
    apply_motion,
    choose_action,
    update_battery_and_mode,
)
from .llm import ChatClient, HeuristicClient, HttpChatClient, LlmConfig
from .mapping import (
    CellClass,
    CellCoord,
    OccupancyGrid,
    detect_frontiers,
    integrate_scan,
    write_frontier_csv,
    write_pgm,
)
from .planning import entry_cost_units, plan_route
from .selection import (
    MapFeatures,
    OtherTeam,
    SelectionContext,
    TargetDecision,
    baseline_select,
    build_context,
    llm_select,
)
from .teams import InvariantError, Team, TeamEvent, check_partition, leave_step, merge_step, singleton_teams
from .world import EnvironmentMap, Pose, load_environment, sense

METHODS = ("baseline", "llm")
MOCKS = ("heuristic",)
MAX_TEAM_SIZE_EXP = 5

METRIC_FIELDS = (
    "step",
    "explored_cells",
    "known_cells",
    "free_cells",
    "occupied_cells",
    "frontier_count",
    "n_teams",
    "n_chr",
    "llm_calls",
    "llm_fallbacks",
)
DECISION_FIELDS = (
    "step",
    "team_id",
    "leader",
    "method",
    "attempts",
    "target_col",
    "target_row",
    "n_frontier_neighbors",
    "n_occupied_neighbors",
    "distance",
)
EVENT_FIELDS = ("step", "event", "team_ids", "robot_ids", "detail")


class InitializationError(RuntimeError):
    pass


def resolve_world(name_or_path: str | Path, base_dir: str | Path | None = None) -> Path:
    """A map file path, or the name of a bundled world such as ``tube20``."""
    p = Path(name_or_path)
    if base_dir is not None and not p.is_absolute():
        candidate = Path(base_dir) / p
        if candidate.exists():
            return candidate
    if p.exists():
        return p
    bundled = resources.files("teamexplore") / "worlds" / f"{p.stem}.txt"
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"world map not found: {name_or_path}")


@dataclass
class SimConfig:
    n_robots: int = 15
    total_steps: int = 300
    warmup_steps: int = 20
    seed: int = 0
    method: str = "baseline"
    env_path: str = "tube20"
    d_join: float = 2.0
    llm: LlmConfig | None = None
    mock: str | None = None
    snapshot_every: int | None = None
    out_dir: str | None = None
    general_leave_rule: bool = False
    check_invariants: bool = True
    llm_workers: int = 1

    def __post_init__(self):
        if self.n_robots < 1:
            raise ValueError(f"n_robots must be >= 1, got {self.n_robots}")
        if self.total_steps < 0:
            raise ValueError(f"total_steps must be >= 0, got {self.total_steps}")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ValueError(
                f"warmup_steps ({self.warmup_steps}) must not exceed total_steps ({self.total_steps})"
            )
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.mock is not None and self.mock not in MOCKS:
            raise ValueError(f"mock must be one of {MOCKS}, got {self.mock!r}")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class StepMetrics:
    step: int
    explored_cells: int  # cells that have ever left Unknown
    known_cells: int  # currently Free or Occupied
    free_cells: int
    occupied_cells: int
    frontier_count: int
    n_teams: int
    n_chr: int
    llm_calls: int
    llm_fallbacks: int

    def row(self) -> list:
        return [getattr(self, f) for f in METRIC_FIELDS]


@dataclass(frozen=True)
class DecisionRecord:
    step: int
    team_id: int
    leader: int
    decision: TargetDecision
    n_frontier_neighbors: int
    n_occupied_neighbors: int
    distance: float

    def row(self) -> list:
        d = self.decision
        return [
            self.step,
            self.team_id,
            self.leader,
            d.method,
            d.attempts,
            d.target.col,
            d.target.row,
            self.n_frontier_neighbors,
            self.n_occupied_neighbors,
            f"{self.distance:.4f}",
        ]


@dataclass(frozen=True)
class LoggedEvent:
    step: int
    kind: str
    team_ids: tuple[int, ...] = ()
    robot_ids: tuple[int, ...] = ()
    detail: str = ""
    source: TeamEvent | None = None

    def row(self) -> list:
        return [
            self.step,
            self.kind,
            ";".join(map(str, self.team_ids)),
            ";".join(map(str, self.robot_ids)),
            self.detail,
        ]


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Independent generator for a named purpose, so streams never share draws."""
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()), index))
    return np.random.default_rng(ss)


class _CountingClient:
    def __init__(self, inner: ChatClient):
        self.inner = inner
        self.calls = 0
        self._lock = Lock()

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.calls += 1
        return self.inner.complete(prompt)


def make_client(cfg: SimConfig) -> ChatClient | None:
    if cfg.method != "llm":
        return None
    if cfg.mock == "heuristic":
        return HeuristicClient()
    return HttpChatClient(cfg.llm or LlmConfig())


class Simulation:
    """Mutable simulation state advanced one step at a time by `step()`."""

    def __init__(self, cfg: SimConfig, env: EnvironmentMap | None = None, client: ChatClient | None = None):
        self.cfg = cfg
        self.env = env if env is not None else load_environment(resolve_world(cfg.env_path).read_text())
        self.grid = OccupancyGrid.for_extent(self.env.width_m, self.env.height_m)
        if client is None:
            client = make_client(cfg)
        self.client = _CountingClient(client) if client is not None else None
        self.step_index = 0
        self.ever_explored = np.zeros((self.grid.rows, self.grid.cols), dtype=bool)
        self.metrics: list[StepMetrics] = []
        self.events: list[LoggedEvent] = []
        self.decisions: list[DecisionRecord] = []
        self.llm_fallbacks = 0
        self.station_cells = [self.grid.cell_of(x, y) for x, y in self.env.charging_stations]
        self._baseline_rngs = [substream(cfg.seed, "baseline", i) for i in range(cfg.n_robots)]
        self.robots = self._place_robots()
        self.teams: dict[int, Team] = singleton_teams(r.id for r in self.robots)
        for r in self.robots:
            r.team_id = r.id

    # -- initialization -------------------------------------------------------

    def _place_robots(self) -> list[RobotState]:
        cfg, env = self.cfg, self.env
        region = env.spawn_region
        rng = substream(cfg.seed, "placement")
        poses: list[Pose] = []
        budget = 1000 * cfg.n_robots
        tries = 0
        min_sep2 = (2 * ROBOT_RADIUS) ** 2
        while len(poses) < cfg.n_robots:
            if tries >= budget:
                raise InitializationError(
                    f"could not place {cfg.n_robots} robots in spawn region {region} "
                    f"after {budget} samples (placed {len(poses)})"
                )
            tries += 1
            x = rng.uniform(region.xmin, region.xmax)
            y = rng.uniform(region.ymin, region.ymax)
            theta = rng.uniform(0.0, 2.0 * math.pi)
            if env.disc_collides(x, y, ROBOT_RADIUS):
                continue
            if any((p.x - x) ** 2 + (p.y - y) ** 2 < min_sep2 for p in poses):
                continue
            poses.append(Pose(float(x), float(y), float(theta)))
        robots = []
        for i, pose in enumerate(poses):
            battery = float(substream(cfg.seed, "battery", i).uniform(0.6, 1.0))
            bias = float(substream(cfg.seed, "bias", i).uniform(0.10, 0.25))
            robots.append(RobotState(id=i, pose=pose, battery=battery, sampler_bias=bias))
        return robots

    # -- helpers ----------------------------------------------------------------

    @property
    def robot_map(self) -> dict[int, RobotState]:
        return {r.id: r for r in self.robots}

    def cell_of(self, robot: RobotState) -> CellCoord:
        return self.grid.cell_of(robot.pose.x, robot.pose.y)

    def nearest_station(self, robot: RobotState) -> CellCoord | None:
        if not self.station_cells:
            return None
        p = robot.pose
        dists = [math.hypot(x - p.x, y - p.y) for x, y in self.env.charging_stations]
        return self.station_cells[int(np.argmin(dists))]

    def _log(self, kind, team_ids=(), robot_ids=(), detail="", source=None):
        self.events.append(
            LoggedEvent(self.step_index, kind, tuple(team_ids), tuple(robot_ids), detail, source)
        )

    # -- phases -------------------------------------------------------------------

    def _sense(self) -> None:
        for r in self.robots:
            integrate_scan(self.grid, r.pose, sense(self.env, r.pose))

    def _update_batteries(self) -> None:
        stations = set(self.station_cells)
        for i, r in enumerate(self.robots):
            new = update_battery_and_mode(r, self.cell_of(r) in stations)
            if new.mode is not r.mode:
                kind = "mode_chr" if new.mode is Mode.CHR else "mode_exp"
                self._log(kind, (r.team_id,), (r.id,), f"battery={new.battery:.4f}")
            self.robots[i] = new

    def _maintain_teams(self) -> None:
        robots = self.robot_map
        teams, left = leave_step(self.teams, robots, self.cfg.general_leave_rule)
        positions = {r.id: r.pose for r in self.robots}
        teams, merged = merge_step(teams, robots, positions, self.cfg.d_join)
        for ev in left + merged:
            self._log(ev.kind, ev.team_ids, ev.robot_ids, ev.detail, ev)
        self.teams = teams

    def _needs_target(self, team: Team, frontier_set: set) -> bool:
        if team.target is None or team.target not in frontier_set:
            return True
        return any(self.cell_of(self.robots[m]) == team.target for m in team.members)

    def _decide(self, tid: int, ctx: SelectionContext, frontier_set: set, use_llm: bool) -> TargetDecision | None:
        leader = self.robots[self.teams[tid].leader]
        fd = [(r.coord, r.distance) for r in ctx.frontier_records()]
        if not fd:
            return None
        rng = self._baseline_rngs[leader.id]

        def fallback():
            return baseline_select(fd, leader.sampler_bias, rng)

        if not use_llm:
            return TargetDecision(fallback(), "baseline", 0, "")
        return llm_select(ctx, self.client, frontier_set, fallback)

    def _select_targets(self, features: MapFeatures, frontier_set: set) -> None:
        pending = []
        for tid in sorted(self.teams):
            team = self.teams[tid]
            if any(self.robots[m].mode is Mode.CHR for m in team.members):
                team.target = None
                continue
            if self._needs_target(team, frontier_set):
                pending.append(tid)
        if not pending:
            return

        others_all = {
            tid: OtherTeam(
                tid,
                self.robots[t.leader].pose,
                None if tid in pending else t.target,
            )
            for tid, t in self.teams.items()
        }
        contexts = {}
        for tid in pending:
            leader = self.robots[self.teams[tid].leader]
            others = [others_all[o] for o in sorted(self.teams) if o != tid]
            contexts[tid] = build_context(self.grid, None, leader.pose, others, features)

        use_llm = self.cfg.method == "llm" and self.step_index >= self.cfg.warmup_steps
        if use_llm and self.cfg.llm_workers > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.llm_workers) as pool:
                futures = {
                    tid: pool.submit(self._decide, tid, contexts[tid], frontier_set, True) for tid in pending
                }
                decisions = {tid: f.result() for tid, f in futures.items()}
        else:
            decisions = {tid: self._decide(tid, contexts[tid], frontier_set, use_llm) for tid in pending}

        for tid in pending:
            team = self.teams[tid]
            decision = decisions[tid]
            if decision is None:
                team.target = None
                self._log("no_frontier", (tid,), (team.leader,))
                continue
            if self.cfg.check_invariants and decision.target not in frontier_set:
                raise InvariantError(f"step {self.step_index}: team {tid} target {decision.target} not a frontier")
            if decision.method == "llm_fallback":
                self.llm_fallbacks += 1
            team.target = decision.target
            rec = contexts[tid].record_for(decision.target)
            self.decisions.append(
                DecisionRecord(
                    self.step_index,
                    tid,
                    team.leader,
                    decision,
                    rec.n_frontier_neighbors,
                    rec.n_occupied_neighbors,
                    rec.distance,
                )
            )

    def _move(self) -> None:
        costs = entry_cost_units(self.grid).ravel().tolist()
        cs = self.grid.cell_size
        for i, r in enumerate(self.robots):
            team = self.teams[r.team_id]
            goal = self.nearest_station(r) if r.mode is Mode.CHR else team.target
            route = None
            if goal is not None:
                route = plan_route(self.grid, self.cell_of(r), goal, costs)
                if route is None and r.mode is Mode.EXP and team.leader == r.id:
                    self._log("target_unreachable", (team.team_id,), (r.id,), f"target={goal.col};{goal.row}")
                    team.target = None
            action = Action.STOP if route is None else choose_action(r, route, cs)
            r.current_route = route
            self.robots[i] = dataclasses.replace(r, pose=apply_motion(self.env, r, action))

    def _measure(self, features: MapFeatures) -> StepMetrics:
        classes = features.classes
        free = int(np.count_nonzero(classes == CellClass.FREE))
        occ = int(np.count_nonzero(classes == CellClass.OCCUPIED))
        self.ever_explored |= classes != CellClass.UNKNOWN
        return StepMetrics(
            step=self.step_index,
            explored_cells=int(np.count_nonzero(self.ever_explored)),
            known_cells=free + occ,
            free_cells=free,
            occupied_cells=occ,
            frontier_count=len(features.frontiers),
            n_teams=len(self.teams),
            n_chr=sum(r.mode is Mode.CHR for r in self.robots),
            llm_calls=self.client.calls if self.client is not None else 0,
            llm_fallbacks=self.llm_fallbacks,
        )

    def check_invariants(self) -> None:
        check_partition(self.teams, range(len(self.robots)))
        for tid, team in self.teams.items():
            for m in team.members:
                if self.robots[m].team_id != tid:
                    raise InvariantError(f"robot {m} records team {self.robots[m].team_id}, registry says {tid}")
            if all(self.robots[m].mode is Mode.EXP for m in team.members) and team.size > MAX_TEAM_SIZE_EXP:
                raise InvariantError(f"all-EXP team {tid} has {team.size} members")
        for r in self.robots:
            if not 0.0 <= r.battery <= 1.0:
                raise InvariantError(f"robot {r.id} battery {r.battery}")
            expected = 1 if r.mode is Mode.CHR else 5
            if r.desired_team_size != expected:
                raise InvariantError(f"robot {r.id} mode {r.mode.value} with desired size {r.desired_team_size}")
            if not 0.0 <= r.pose.theta < 2.0 * math.pi:
                raise InvariantError(f"robot {r.id} theta {r.pose.theta}")
            if self.env.disc_collides(r.pose.x, r.pose.y, ROBOT_RADIUS):
                raise InvariantError(f"robot {r.id} overlaps an obstacle at ({r.pose.x:.3f}, {r.pose.y:.3f})")
        for ev in self.events:
            if ev.step != self.step_index or ev.kind != "merge":
                continue
            src = ev.source
            if sum(src.sizes) > min(src.desired):
                raise InvariantError(f"step {ev.step}: merge {src.team_ids} violates size condition")

    def step(self) -> StepMetrics:
        if self.step_index >= self.cfg.total_steps:
            raise RuntimeError(f"simulation already ran {self.cfg.total_steps} steps")
        self._sense()
        features = MapFeatures.from_grid(self.grid)
        frontier_set = set(features.frontiers)
        self._update_batteries()
        self._maintain_teams()
        self._select_targets(features, frontier_set)
        self._move()
        m = self._measure(features)
        self.metrics.append(m)
        if self.cfg.check_invariants:
            self.check_invariants()
        self.step_index += 1
        return m


def initialize(cfg: SimConfig, client: ChatClient | None = None) -> Simulation:
    return Simulation(cfg, client=client)


@dataclass
class RunSummary:
    config: SimConfig
    metrics: list[StepMetrics]
    events: list[LoggedEvent]
    decisions: list[DecisionRecord]
    wall_time: float
    out_dir: Path | None = None
    snapshots: list[Path] = field(default_factory=list)

    @property
    def final_explored_cells(self) -> int:
        return self.metrics[-1].explored_cells if self.metrics else 0

    def to_json(self) -> dict:
        cfg = self.config.to_dict()
        return {
            "config": cfg,
            "steps": len(self.metrics),
            "final_explored_cells": self.final_explored_cells,
            "final_metrics": dict(zip(METRIC_FIELDS, self.metrics[-1].row())) if self.metrics else None,
            "n_decisions": len(self.decisions),
            "wall_time": round(self.wall_time, 3),
        }


def _write_csv(path: Path, header, rows) -> None:
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc


def _snapshot(sim: Simulation, out: Path, k: int) -> Path:
    path = out / f"map_{k:04d}.pgm"
    write_pgm(sim.grid, path)
    write_frontier_csv(detect_frontiers(sim.grid), out / f"frontiers_{k:04d}.csv")
    return path


def run(cfg: SimConfig, client: ChatClient | None = None) -> RunSummary:
    """Run all steps; when cfg.out_dir is set, write CSV logs, snapshots, and summary.json."""
    t0 = time.perf_counter()
    sim = Simulation(cfg, client=client)
    out = Path(cfg.out_dir) if cfg.out_dir else None
    snapshots = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        snapshots.append(_snapshot(sim, out, 0))
    for _ in range(cfg.total_steps):
        sim.step()
        k = sim.step_index
        if out is not None and cfg.snapshot_every and k % cfg.snapshot_every == 0:
            snapshots.append(_snapshot(sim, out, k))
    summary = RunSummary(cfg, sim.metrics, sim.events, sim.decisions, time.perf_counter() - t0, out, snapshots)
    if out is not None:
        _write_csv(out / "metrics.csv", METRIC_FIELDS, (m.row() for m in sim.metrics))
        _write_csv(out / "events.csv", EVENT_FIELDS, (e.row() for e in sim.events))
        _write_csv(out / "decisions.csv", DECISION_FIELDS, (d.row() for d in sim.decisions))
        (out / "summary.json").write_text(json.dumps(summary.to_json(), indent=2, default=str) + "\n")
    return summary

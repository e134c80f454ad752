"""Decentralized team formation: recruitment, team-level merging, individual leaving.

Every robot belongs to exactly one team; a lone robot is a team of size one.
Teams are held in a registry ``dict[team_id, Team]`` and robots in a mapping
``robot_id -> RobotState``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .agents import Mode, RobotState
from .mapping import CellCoord
from .world import Pose


@dataclass
class Team:
    team_id: int
    members: set[int]
    leader: int
    target: CellCoord | None = None

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class TeamEvent:
    kind: str  # "merge", "leave_chr", "leave_general"
    team_ids: tuple[int, ...]
    robot_ids: tuple[int, ...]
    # merge: sizes of the two teams and floored mean desired sizes, as tested
    sizes: tuple[int, ...] = ()
    desired: tuple[int, ...] = ()

    @property
    def detail(self) -> str:
        if self.kind == "merge":
            return f"sizes={'+'.join(map(str, self.sizes))};desired={'/'.join(map(str, self.desired))}"
        return ""


def singleton_teams(robot_ids) -> dict[int, Team]:
    return {i: Team(i, {i}, i) for i in robot_ids}


def mean_desired(team: Team, robots: Mapping[int, RobotState]) -> float:
    return sum(robots[i].desired_team_size for i in team.members) / len(team.members)


def is_recruiting(team: Team, robots: Mapping[int, RobotState]) -> bool:
    return mean_desired(team, robots) > len(team.members)


def merge_allowed(a: Team, b: Team, robots: Mapping[int, RobotState]) -> tuple[bool, tuple[int, int]]:
    """Size condition n_a + n_b <= min(floor mean desired of a, of b)."""
    da = math.floor(mean_desired(a, robots))
    db = math.floor(mean_desired(b, robots))
    return a.size + b.size <= min(da, db), (da, db)


def teams_near(a: Team, b: Team, positions: Mapping[int, Pose], d_join: float) -> bool:
    d2 = d_join * d_join
    for i in a.members:
        pi = positions[i]
        for j in b.members:
            pj = positions[j]
            if (pi.x - pj.x) ** 2 + (pi.y - pj.y) ** 2 <= d2:
                return True
    return False


def merge_step(
    teams: Mapping[int, Team],
    robots: Mapping[int, RobotState],
    positions: Mapping[int, Pose],
    d_join: float,
) -> tuple[dict[int, Team], list[TeamEvent]]:
    """Merge recruiting teams that are within d_join of each other.

    Pairs are tried in ascending (team_id_a, team_id_b) order and a team takes
    part in at most one merge per call. Returns a new registry; robots'
    team_id fields are updated in place.
    """
    out = {tid: Team(t.team_id, set(t.members), t.leader, t.target) for tid, t in teams.items()}
    ids = sorted(out)
    recruiting = {tid: is_recruiting(out[tid], robots) for tid in ids}
    used: set[int] = set()
    events: list[TeamEvent] = []
    for ia, a_id in enumerate(ids):
        if a_id in used or not recruiting[a_id]:
            continue
        for b_id in ids[ia + 1 :]:
            if b_id in used or not recruiting[b_id]:
                continue
            a, b = out[a_id], out[b_id]
            ok, desired = merge_allowed(a, b, robots)
            if not ok or not teams_near(a, b, positions, d_join):
                continue
            events.append(
                TeamEvent(
                    "merge",
                    (a_id, b_id),
                    tuple(sorted(a.members | b.members)),
                    sizes=(a.size, b.size),
                    desired=desired,
                )
            )
            a.members |= b.members
            a.leader = min(a.members)
            a.target = None
            del out[b_id]
            for r in b.members:
                robots[r].team_id = a_id
            used.update((a_id, b_id))
            break
    return out, events


def _next_free_id(registry: Mapping[int, Team]) -> int:
    i = 0
    while i in registry:
        i += 1
    return i


def leave_step(
    teams: Mapping[int, Team],
    robots: Mapping[int, RobotState],
    general_rule_enabled: bool = False,
) -> tuple[dict[int, Team], list[TeamEvent]]:
    """CHR robots always leave multi-robot teams; optionally one surplus member per team.

    A departing robot forms a new singleton team under the smallest unused id.
    """
    out = {tid: Team(t.team_id, set(t.members), t.leader, t.target) for tid, t in teams.items()}
    events: list[TeamEvent] = []

    def depart(team: Team, rid: int, kind: str) -> None:
        team.members.discard(rid)
        if team.leader == rid:
            team.leader = min(team.members)
        new_id = _next_free_id(out)
        out[new_id] = Team(new_id, {rid}, rid)
        robots[rid].team_id = new_id
        events.append(TeamEvent(kind, (team.team_id, new_id), (rid,)))

    for tid in sorted(teams):
        team = out[tid]
        for rid in sorted(team.members):
            if team.size < 2:
                break
            if robots[rid].mode is Mode.CHR:
                depart(team, rid, "leave_chr")

    if general_rule_enabled:
        for tid in sorted(teams):
            team = out[tid]
            if team.size < 2 or mean_desired(team, robots) >= team.size:
                continue
            candidates = [r for r in team.members if r != team.leader]
            depart(team, max(candidates), "leave_general")
    return out, events


class InvariantError(RuntimeError):
    """A simulation invariant was violated."""


def check_partition(teams: Mapping[int, Team], robot_ids) -> None:
    """Raise InvariantError unless the registry partitions robot_ids with valid leaders."""
    seen: dict[int, int] = {}
    for tid, team in teams.items():
        if team.team_id != tid:
            raise InvariantError(f"team key {tid} != team_id {team.team_id}")
        if not team.members:
            raise InvariantError(f"team {tid} is empty")
        if team.leader not in team.members:
            raise InvariantError(f"team {tid} leader {team.leader} not a member")
        for r in team.members:
            if r in seen:
                raise InvariantError(f"robot {r} in teams {seen[r]} and {tid}")
            seen[r] = tid
    if set(seen) != set(robot_ids):
        raise InvariantError("team registry does not cover exactly the robot ids")

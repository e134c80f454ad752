import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamexplore.agents import Mode, RobotState
from teamexplore.teams import (
    InvariantError,
    Team,
    check_partition,
    is_recruiting,
    leave_step,
    merge_step,
    singleton_teams,
)
from teamexplore.world import Pose


def make_robots(n, chr_ids=()):
    robots = {}
    for i in range(n):
        mode = Mode.CHR if i in chr_ids else Mode.EXP
        robots[i] = RobotState(i, Pose(0, 0), 1.0, mode, i, 1 if mode is Mode.CHR else 5)
    return robots


def assign(teams, robots):
    for tid, t in teams.items():
        for m in t.members:
            robots[m].team_id = tid


class TestRecruiting:
    def test_singleton_exp(self):
        robots = make_robots(1)
        assert is_recruiting(Team(0, {0}, 0), robots)

    def test_full_team(self):
        robots = make_robots(5)
        assert not is_recruiting(Team(0, set(range(5)), 0), robots)

    def test_mixed_team_mean(self):
        robots = make_robots(2, chr_ids={1})
        assert is_recruiting(Team(0, {0, 1}, 0), robots)  # mean 3 > 2


class TestMerge:
    def test_two_singletons_merge(self):
        robots = make_robots(2)
        teams = singleton_teams(robots)
        pos = {0: Pose(1.0, 1.0), 1: Pose(2.0, 1.0)}
        out, events = merge_step(teams, robots, pos, 2.0)
        assert list(out) == [0]
        assert out[0].members == {0, 1} and out[0].leader == 0 and out[0].target is None
        assert robots[1].team_id == 0
        assert events[0].kind == "merge" and events[0].sizes == (1, 1) and events[0].desired == (5, 5)

    def test_too_far(self):
        robots = make_robots(2)
        out, events = merge_step(singleton_teams(robots), robots, {0: Pose(0, 0), 1: Pose(2.01, 0)}, 2.0)
        assert len(out) == 2 and not events

    def test_three_and_three_blocked(self):
        robots = make_robots(6)
        teams = {0: Team(0, {0, 1, 2}, 0), 3: Team(3, {3, 4, 5}, 3)}
        assign(teams, robots)
        out, events = merge_step(teams, robots, {i: Pose(0.1 * i, 0) for i in range(6)}, 2.0)
        assert len(out) == 2 and not events

    def test_three_near_singletons_one_merge_per_team(self):
        robots = make_robots(3)
        pos = {i: Pose(1.0 + 0.3 * i, 1.0) for i in range(3)}
        out, events = merge_step(singleton_teams(robots), robots, pos, 2.0)
        assert {tid: t.members for tid, t in out.items()} == {0: {0, 1}, 2: {2}}
        assert len(events) == 1
        # next step the pair and the singleton merge
        out, events = merge_step(out, robots, pos, 2.0)
        assert {tid: t.members for tid, t in out.items()} == {0: {0, 1, 2}}

    def test_merge_resets_target_and_keeps_smaller_id(self):
        robots = make_robots(3)
        teams = {1: Team(1, {1, 2}, 1, (4, 4)), 7: Team(7, {0}, 0, (9, 9))}
        assign(teams, robots)
        out, _ = merge_step(teams, robots, {i: Pose(i, 0) for i in range(3)}, 2.0)
        assert list(out) == [1]
        assert out[1].leader == 0 and out[1].target is None
        assert robots[0].team_id == 1

    def test_chr_member_blocks_recruiting(self):
        robots = make_robots(2, chr_ids={1})
        out, events = merge_step(singleton_teams(robots), robots, {0: Pose(0, 0), 1: Pose(0.5, 0)}, 2.0)
        assert not events


class TestLeave:
    def test_chr_member_leaves(self):
        robots = make_robots(3, chr_ids={1})
        teams = {0: Team(0, {0, 1, 2}, 0)}
        assign(teams, robots)
        out, events = leave_step(teams, robots)
        assert out[0].members == {0, 2} and out[0].leader == 0
        assert out[1].members == {1} and out[1].leader == 1
        assert robots[1].team_id == 1
        assert [(e.kind, e.robot_ids) for e in events] == [("leave_chr", (1,))]

    def test_chr_leader_replaced(self):
        robots = make_robots(3, chr_ids={0})
        teams = {0: Team(0, {0, 1, 2}, 0)}
        assign(teams, robots)
        out, _ = leave_step(teams, robots)
        assert out[0].members == {1, 2} and out[0].leader == 1
        assert out[1].members == {0}

    def test_chr_singleton_unchanged(self):
        robots = make_robots(1, chr_ids={0})
        teams = singleton_teams(robots)
        out, events = leave_step(teams, robots)
        assert out[0].members == {0} and not events

    def test_general_rule(self):
        robots = make_robots(6)
        teams = {0: Team(0, set(range(6)), 0)}
        assign(teams, robots)
        out, events = leave_step(teams, robots, general_rule_enabled=True)
        assert out[0].size == 5 and 5 not in out[0].members
        assert out[1].members == {5}
        assert events[0].kind == "leave_general"
        off, none = leave_step(teams, robots, general_rule_enabled=False)
        assert off[0].size == 6 and not none


class TestPartitionCheck:
    def test_detects_duplicate(self):
        with pytest.raises(InvariantError):
            check_partition({0: Team(0, {0, 1}, 0), 1: Team(1, {1}, 1)}, range(2))

    def test_detects_bad_leader(self):
        with pytest.raises(InvariantError):
            check_partition({0: Team(0, {0}, 3)}, range(1))

    def test_detects_missing(self):
        with pytest.raises(InvariantError):
            check_partition({0: Team(0, {0}, 0)}, range(2))


@settings(max_examples=150, deadline=None)
@given(
    n=st.integers(1, 14),
    seed=st.integers(0, 2**32 - 1),
    rounds=st.integers(1, 12),
    general=st.booleans(),
)
def test_random_protocol_rounds_keep_invariants(n, seed, rounds, general):
    rng = np.random.default_rng(seed)
    robots = make_robots(n)
    teams = singleton_teams(robots)
    for _ in range(rounds):
        for r in robots.values():
            if rng.random() < 0.15:
                r.mode = Mode.CHR if r.mode is Mode.EXP else Mode.EXP
                r.desired_team_size = 1 if r.mode is Mode.CHR else 5
        pos = {i: Pose(*rng.uniform(0, 3, 2)) for i in robots}
        teams, left = leave_step(teams, robots, general)
        check_partition(teams, robots)
        for t in teams.values():
            if t.size > 1:
                assert all(robots[m].mode is Mode.EXP for m in t.members)
        before = {tid: (t.size, math.floor(sum(robots[m].desired_team_size for m in t.members) / t.size))
                  for tid, t in teams.items()}
        teams, merged = merge_step(teams, robots, pos, 2.0)
        check_partition(teams, robots)
        assert sum(t.size for t in teams.values()) == n
        for ev in merged:
            a, b = ev.team_ids
            assert ev.sizes == (before[a][0], before[b][0])
            assert sum(ev.sizes) <= min(before[a][1], before[b][1])
        for tid, t in teams.items():
            assert all(robots[m].team_id == tid for m in t.members)
            if all(robots[m].mode is Mode.EXP for m in t.members):
                assert t.size <= 5


def test_deterministic_events():
    def once():
        robots = make_robots(8)
        pos = {i: Pose(0.4 * i, 0.2 * (i % 3)) for i in range(8)}
        teams, events = merge_step(singleton_teams(robots), robots, pos, 2.0)
        return [(e.kind, e.team_ids, e.robot_ids) for e in events], {k: sorted(t.members) for k, t in teams.items()}

    assert once() == once()

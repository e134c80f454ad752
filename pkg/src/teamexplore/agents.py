"""Robot state, discrete motion model, and the battery-driven EXP/CHR modes."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum

from .planning import Route
from .world import EnvironmentMap, Pose

ROBOT_RADIUS = 0.15
FORWARD_STEP = 0.2
ROTATION_STEP = math.radians(40.0)
HEADING_TOLERANCE = math.radians(20.0)

BATTERY_DRAIN = 0.002
BATTERY_CHARGE = 0.05
LOW_BATTERY = 0.25

EXP_TEAM_SIZE = 5
CHR_TEAM_SIZE = 1


class Mode(str, Enum):
    EXP = "EXP"
    CHR = "CHR"


class Action(str, Enum):
    STOP = "stop"
    FORWARD = "forward"
    ROTATE_LEFT = "left"
    ROTATE_RIGHT = "right"


def desired_size_for(mode: Mode) -> int:
    return CHR_TEAM_SIZE if mode is Mode.CHR else EXP_TEAM_SIZE


@dataclass
class RobotState:
    id: int
    pose: Pose
    battery: float
    mode: Mode = Mode.EXP
    team_id: int = -1
    desired_team_size: int = EXP_TEAM_SIZE
    sampler_bias: float = 0.15
    current_route: Route | None = None


def heading_error(pose: Pose, x: float, y: float) -> float:
    """Signed angle from the robot's heading to the point, in (-pi, pi]."""
    e = math.atan2(y - pose.y, x - pose.x) - pose.theta
    e = math.fmod(e, 2.0 * math.pi)
    if e > math.pi:
        e -= 2.0 * math.pi
    elif e <= -math.pi:
        e += 2.0 * math.pi
    return e


def action_for_error(e: float) -> Action:
    if abs(e) > HEADING_TOLERANCE:
        return Action.ROTATE_RIGHT if e < 0.0 else Action.ROTATE_LEFT
    return Action.FORWARD


def choose_action(robot: RobotState, route: Route, grid_cell_size: float) -> Action:
    if route is None or len(route.cells) == 0:
        raise ValueError(f"robot {robot.id}: empty route")
    if len(route.cells) == 1:
        return Action.STOP
    col, row = route.cells[1]
    wx, wy = (col + 0.5) * grid_cell_size, (row + 0.5) * grid_cell_size
    return action_for_error(heading_error(robot.pose, wx, wy))


def apply_motion(env: EnvironmentMap, robot: RobotState, action: Action) -> Pose:
    pose = robot.pose
    if action is Action.STOP:
        return pose
    if action is Action.ROTATE_LEFT:
        return Pose(pose.x, pose.y, pose.theta + ROTATION_STEP)
    if action is Action.ROTATE_RIGHT:
        return Pose(pose.x, pose.y, pose.theta - ROTATION_STEP)
    nx = pose.x + FORWARD_STEP * math.cos(pose.theta)
    ny = pose.y + FORWARD_STEP * math.sin(pose.theta)
    if env.disc_collides(nx, ny, ROBOT_RADIUS):
        return pose
    return Pose(nx, ny, pose.theta)


def update_battery_and_mode(robot: RobotState, at_station: bool) -> RobotState:
    if at_station and robot.mode is Mode.CHR:
        battery = min(1.0, robot.battery + BATTERY_CHARGE)
    else:
        battery = max(0.0, robot.battery - BATTERY_DRAIN)
    mode = robot.mode
    if mode is Mode.EXP and battery < LOW_BATTERY:
        mode = Mode.CHR
    elif mode is Mode.CHR and battery >= 1.0:
        mode = Mode.EXP
    return dataclasses.replace(
        robot, battery=battery, mode=mode, desired_team_size=desired_size_for(mode)
    )


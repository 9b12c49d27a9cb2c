"""Straight-line base paths and interpolated arm motions with collision checking.

The base is a disc on the floor; the arm is an end-effector point swept by a
small ball. There is no search: a blocked straight line is reported as
:class:`Blocked` so the task planner can clear the obstacle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Obstacle, Pose6DoF, first_hit, floor_section, interpolate_poses, planar_pose, poses_close
from .state import Event, SceneState

CONFIG_TOL = 1e-6


@dataclass(frozen=True)
class Trajectory:
    kind: str  # "base" | "arm"
    waypoints: tuple  # (x, y, heading) triples for base, Pose6DoF for arm
    total_length: float


@dataclass(frozen=True)
class Blocked:
    obstacle_id: str
    blocking_point: tuple


@dataclass(frozen=True)
class OutOfReach:
    distance: float
    reach: float


class StaleTrajectory(Exception):
    pass


def _ignored(state: SceneState, exclude) -> set[str]:
    ignored = set(exclude)
    if state.agent.holding:
        ignored.add(state.agent.holding)
    return ignored


def base_obstacles(state: SceneState, exclude=()) -> list[Obstacle]:
    """Floor footprints of every solid object, excluding held and open ones."""
    ignored = _ignored(state, exclude)
    obstacles = []
    for o in state.objects:
        if o.id in ignored or o.prop("open", False):
            continue
        shape = o.shape
        section = floor_section(shape) if shape is not None else None
        if section is not None:
            obstacles.append(Obstacle(o.id, section))
    return obstacles


def arm_obstacles(state: SceneState, exclude=()) -> list[Obstacle]:
    ignored = _ignored(state, exclude)
    return [
        Obstacle(o.id, o.shape)
        for o in state.objects
        if o.id not in ignored and o.shape is not None and not o.prop("open", False)
    ]


def plan_base_path(state: SceneState, target, exclude=()) -> Trajectory | Blocked:
    cfg = state.config
    x0, y0 = state.agent.base
    tx, ty = float(target[0]), float(target[1])
    if not (math.isfinite(tx) and math.isfinite(ty)):
        raise ValueError("base target must be finite")
    length = math.hypot(tx - x0, ty - y0)
    if length <= 1e-12:
        return Trajectory("base", ((x0, y0, state.agent.heading),), 0.0)
    hit = first_hit((x0, y0), (tx, ty), base_obstacles(state, exclude), radius=cfg.base_radius)
    if hit is not None:
        obstacle_id, t = hit
        return Blocked(obstacle_id, (x0 + t * (tx - x0), y0 + t * (ty - y0), 0.0))
    heading = math.atan2(ty - y0, tx - x0)
    n = max(1, math.ceil(length / cfg.max_step - 1e-9))
    waypoints = [(x0, y0, state.agent.heading)]
    for i in range(1, n + 1):
        s = i / n
        waypoints.append((x0 + s * (tx - x0), y0 + s * (ty - y0), heading))
    waypoints[-1] = (tx, ty, heading)
    return Trajectory("base", tuple(waypoints), length)


def plan_arm_motion(state: SceneState, target: Pose6DoF, exclude=()) -> Trajectory | Blocked | OutOfReach:
    """Straight end-effector motion to ``target``.

    Obstacles already touching the end-effector at the start are ignored: the
    arm is moving away from something it just let go of.
    """
    cfg = state.config
    reach = float(np.linalg.norm(np.asarray(target.translation[:2]) - state.base_position))
    if reach > cfg.reach_radius:
        return OutOfReach(reach, cfg.reach_radius)
    start = state.agent.end_effector
    if poses_close(start, target, 1e-12, 1e-12):
        return Trajectory("arm", (start,), 0.0)
    a, b = start.position, target.position
    obstacles = [
        ob for ob in arm_obstacles(state, exclude) if ob.shape.distance(a) > cfg.arm_sweep_radius
    ]
    hit = first_hit(a, b, obstacles, radius=cfg.arm_sweep_radius)
    if hit is not None:
        obstacle_id, t = hit
        return Blocked(obstacle_id, tuple(float(c) for c in a + t * (b - a)))
    length = float(np.linalg.norm(b - a))
    n = max(1, math.ceil(length / cfg.max_step - 1e-9))
    return Trajectory("arm", tuple(interpolate_poses(start, target, n)), length)


def _moved_base(state: SceneState, x: float, y: float, heading: float) -> SceneState:
    """Move the base rigidly, carrying the end-effector and any held object."""
    old = planar_pose(*state.agent.base, state.agent.heading)
    new = planar_pose(x, y, heading)
    delta = new.compose(old.inverse())
    ee = delta.compose(state.agent.end_effector)
    agent = replace(state.agent, base=(x, y), heading=heading, end_effector=ee)
    out = replace(state, agent=agent)
    return _sync_held(out)


def _sync_held(state: SceneState) -> SceneState:
    held = state.held_object()
    if held is None:
        return state
    return state.with_object(replace(held, pose=state.agent.end_effector))


def advance(state: SceneState, traj: Trajectory) -> SceneState:
    """Apply a trajectory's final configuration and elapsed time, without logging an event."""
    cfg = state.config
    if traj.kind == "base":
        x0, y0, h0 = traj.waypoints[0]
        bx, by = state.agent.base
        if max(abs(x0 - bx), abs(y0 - by), abs(h0 - state.agent.heading)) > CONFIG_TOL:
            raise StaleTrajectory(f"trajectory starts at {(x0, y0, h0)}, base is at {(bx, by, state.agent.heading)}")
        x, y, h = traj.waypoints[-1]
        out = _moved_base(state, x, y, h) if len(traj.waypoints) > 1 else state
        speed = cfg.base_speed
    elif traj.kind == "arm":
        if not poses_close(traj.waypoints[0], state.agent.end_effector, CONFIG_TOL, CONFIG_TOL):
            raise StaleTrajectory("trajectory start does not match the end-effector pose")
        out = state
        if len(traj.waypoints) > 1:
            out = _sync_held(replace(state, agent=replace(state.agent, end_effector=traj.waypoints[-1])))
        speed = cfg.arm_speed
    else:
        raise ValueError(f"unknown trajectory kind {traj.kind!r}")
    return replace(out, clock=out.clock + traj.total_length / speed)


def execute_trajectory(state: SceneState, traj: Trajectory, target: str | None = None) -> SceneState:
    moved = advance(state, traj)
    return moved.with_event(Event("moved", target or traj.kind, value=traj.total_length))

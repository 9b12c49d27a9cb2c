"""Transition model over :class:`SceneState`: admissibility, effects and goal tests."""

from __future__ import annotations

import fnmatch
import math
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Union

import numpy as np

from . import motion
from .dsl import FunctionRegistry, Ident, Num, NumList, PlanCall, Str, default_registry, render_arg, validate
from .geometry import Obstacle, Pose6DoF, collision_check, poses_close, rotation_angle, shapes_overlap
from .state import (
    AGENT,
    AgentState,
    Event,
    ObjectEntity,
    SceneState,
    WorldConfig,
    is_finite_number,
)

__all__ = [
    "AGENT",
    "AgentState",
    "Event",
    "ObjectEntity",
    "SceneState",
    "WorldConfig",
    "Reason",
    "Inadmissible",
    "apply_action",
    "is_admissible",
    "collision_check",
    "satisfies",
    "PoseAt",
    "Held",
    "NotHeld",
    "EventSeen",
    "NoEvent",
    "PropertyIs",
    "Stopped",
    "goal_from_dict",
    "goal_to_dict",
    "Obstacle",
]

_REGISTRY = default_registry()
TARGET_TOL_M = 0.05
TARGET_TOL_RAD = math.radians(5.0)
_DIAL_RE = re.compile(r"\+?[0-9][0-9-]*\Z")


class Reason(str, Enum):
    UNKNOWN_OBJECT = "UnknownObject"
    OUT_OF_REACH = "OutOfReach"
    COLLISION_BLOCKED = "CollisionBlocked"
    NOTHING_HELD = "NothingHeld"
    ALREADY_HOLDING = "AlreadyHolding"
    NO_PENDING_RESPONSE = "NoPendingResponse"
    BAD_ARGUMENT = "BadArgument"
    TERMINATED = "Terminated"


@dataclass(frozen=True)
class Inadmissible:
    reason: Reason
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.reason.value}: {self.detail}" if self.detail else self.reason.value


class _Reject(Exception):
    def __init__(self, reason: Reason, detail: str = ""):
        super().__init__(detail)
        self.result = Inadmissible(reason, detail)


# ---------------------------------------------------------------- arg resolution


def _object_arg(state: SceneState, value, *, allow_agent: bool = False) -> ObjectEntity | str:
    if not isinstance(value, Ident):
        raise _Reject(Reason.BAD_ARGUMENT, f"expected an object, got {render_arg(value)}")
    resolved = state.resolve_object(value.name)
    if resolved is None:
        raise _Reject(Reason.UNKNOWN_OBJECT, f"unknown object {value.name!r}")
    if resolved == AGENT and not allow_agent:
        raise _Reject(Reason.BAD_ARGUMENT, f"{value.name!r} refers to the robot")
    return resolved


def _agent_arg(state: SceneState, value) -> None:
    if _object_arg(state, value, allow_agent=True) != AGENT:
        raise _Reject(Reason.BAD_ARGUMENT, f"{render_arg(value)} is not the robot")


def resolve_pose(state: SceneState, value, subject: ObjectEntity | None = None) -> Pose6DoF | None:
    """Pose named by a plan argument, or None if it cannot be bound.

    ``target_pose`` means the subject's declared target; ``<sym>_pose`` and
    ``<sym>_position`` mean the current pose of the object bound to ``<sym>``.
    """
    keep_rot = subject.pose.rotation if subject is not None else state.agent.end_effector.rotation
    if isinstance(value, NumList):
        v = [float(c) for c in value.values]
        if len(v) == 2:
            return Pose6DoF((v[0], v[1], 0.0), keep_rot)
        if len(v) == 3:
            return Pose6DoF(tuple(v), keep_rot)
        if len(v) == 7:
            try:
                return Pose6DoF(tuple(v[:3]), tuple(v[3:]))
            except ValueError:
                return None
        return None
    if not isinstance(value, Ident):
        return None
    name = value.name.lower()
    if name == "target_pose":
        if subject is None or not subject.prop("target_pose"):
            return None
        return Pose6DoF.from_dict(subject.prop("target_pose"))
    for suffix in ("_pose", "_position"):
        if name.endswith(suffix) and len(name) > len(suffix):
            bound = state.resolve_object(value.name[: -len(suffix)])
            if bound == AGENT:
                return state.agent.end_effector
            if bound is not None:
                return bound.pose
    bound = state.resolve_object(value.name)
    if isinstance(bound, ObjectEntity):
        return bound.pose
    return None


def _scalar_arg(state: SceneState, value) -> float:
    if isinstance(value, Num):
        number = value.value
    elif isinstance(value, Ident):
        number = state.parameters.get(value.name.lower())
    else:
        number = None
    if not is_finite_number(number):
        raise _Reject(Reason.BAD_ARGUMENT, f"{render_arg(value)} is not a number")
    return float(number)


def _text_arg(state: SceneState, value) -> str:
    if isinstance(value, Str):
        return value.value
    if isinstance(value, Num):
        v = value.value
        return str(int(v)) if float(v).is_integer() else render_arg(value)
    if isinstance(value, Ident):
        bound = state.parameters.get(value.name.lower())
        if isinstance(bound, (str, int, float)) and not isinstance(bound, bool):
            return str(bound)
        return value.name
    raise _Reject(Reason.BAD_ARGUMENT, f"{render_arg(value)} is not text")


def _pose_arg(state: SceneState, value, subject: ObjectEntity | None) -> Pose6DoF:
    pose = resolve_pose(state, value, subject)
    if pose is None:
        raise _Reject(Reason.BAD_ARGUMENT, f"cannot resolve pose {render_arg(value)}")
    return pose


# --------------------------------------------------------------------- helpers


def _body(state: SceneState, o: ObjectEntity) -> ObjectEntity:
    return state.parent_of(o) or o


def _check_reach(state: SceneState, point, what: str) -> None:
    d = float(np.linalg.norm(np.asarray(point[:2]) - state.base_position))
    if d > state.config.reach_radius:
        raise _Reject(Reason.OUT_OF_REACH, f"{what} is {d:.3f} m away, reach is {state.config.reach_radius} m")


def _arm_to(state: SceneState, target: Pose6DoF, exclude) -> SceneState:
    plan = motion.plan_arm_motion(state, target, exclude)
    if isinstance(plan, motion.OutOfReach):
        raise _Reject(Reason.OUT_OF_REACH, f"target is {plan.distance:.3f} m away, reach is {plan.reach} m")
    if isinstance(plan, motion.Blocked):
        raise _Reject(Reason.COLLISION_BLOCKED, f"arm path blocked by {plan.obstacle_id}")
    return motion.advance(state, plan)


def _exclusions(state: SceneState, *objs: ObjectEntity) -> set[str]:
    ids = set()
    for o in objs:
        ids.add(o.id)
        parent = state.parent_of(o)
        if parent is not None:
            ids.add(parent.id)
    return ids


def _apply_target_effects(state: SceneState, o: ObjectEntity) -> SceneState:
    """Scenario-declared effects of putting ``o`` down at its target pose."""
    target = o.prop("target_pose")
    effects = o.prop("on_target")
    if not target or not effects:
        return state
    if not poses_close(o.pose, Pose6DoF.from_dict(target), TARGET_TOL_M, TARGET_TOL_RAD):
        return state
    for object_id in sorted(effects):
        other = state.obj(object_id)
        if other is not None:
            state = state.with_object(other.with_props(**effects[object_id]))
    return state


def _grasp(state: SceneState, o: ObjectEntity) -> SceneState:
    if state.agent.holding:
        raise _Reject(Reason.ALREADY_HOLDING, f"already holding {state.agent.holding}")
    _check_reach(state, o.pose.translation, o.id)
    state = _arm_to(state, o.pose, _exclusions(state, o))
    o = replace(state.obj(o.id), pose=state.agent.end_effector)
    o = o.with_props(held_by=AGENT)
    return replace(state.with_object(o), agent=replace(state.agent, holding=o.id))


def _put_down(state: SceneState, call: PlanCall, kind: str) -> SceneState:
    obj_arg, pose_arg, agent_arg = call.positional
    _agent_arg(state, agent_arg)
    held = state.held_object()
    if held is None:
        raise _Reject(Reason.NOTHING_HELD, "not holding anything")
    named = _object_arg(state, obj_arg)
    if named.id != held.id and not (kind == "released" and _body(state, held).id == named.id):
        raise _Reject(Reason.BAD_ARGUMENT, f"holding {held.id}, not {named.id}")
    target = _pose_arg(state, pose_arg, held)
    _check_reach(state, target.translation, "target pose")
    moved = _arm_to(state, target, _exclusions(state, held, named))
    held = moved.held_object()
    if held.shape is not None:
        for o in moved.objects:
            if o.id in _exclusions(moved, held) or o.shape is None or o.prop("open", False):
                continue
            if shapes_overlap(held.shape, o.shape):
                raise _Reject(Reason.COLLISION_BLOCKED, f"{held.id} would collide with {o.id} at the target pose")
    released = held.with_props(held_by=None)
    out = replace(moved.with_object(released), agent=replace(moved.agent, holding=None))
    out = _apply_target_effects(out, out.obj(released.id))
    return out.with_event(Event(kind, released.id))


def _unresponsive(state: SceneState, human: ObjectEntity) -> bool:
    """Asked, and silent for longer than the scenario's no_response_after."""
    if not (state.awaiting_response and state.agent.partner == human.id and state.agent.said_at is not None):
        return False
    limit = human.prop("no_response_after")
    return limit is not None and state.clock - state.agent.said_at >= limit and not next_utterance_ready(state, human)


def next_utterance_ready(state: SceneState, human: ObjectEntity) -> bool:
    utterances = human.prop("scripted_utterances") or []
    if not utterances or state.agent.said_at is None:
        return False
    return state.agent.said_at + float(utterances[0].get("available_after", 0.0)) <= state.clock


def response_status(state: SceneState) -> str | None:
    """"waiting", "reply", "silent" (no response past the threshold) or None."""
    if not state.awaiting_response or state.agent.partner is None:
        return None
    human = state.obj(state.agent.partner)
    if human is None:
        return None
    if next_utterance_ready(state, human):
        return "reply"
    if _unresponsive(state, human):
        return "silent"
    return "waiting"


# -------------------------------------------------------------------- handlers


def _do_pick(state: SceneState, call: PlanCall) -> SceneState:
    obj_arg, pose_arg, agent_arg = call.positional
    _agent_arg(state, agent_arg)
    o = _object_arg(state, obj_arg)
    if o.is_human or _body(state, o).is_human:
        raise _Reject(Reason.BAD_ARGUMENT, f"{o.id} is a person; use hold")
    grasp = _pose_arg(state, pose_arg, o)
    if not poses_close(grasp, o.pose, TARGET_TOL_M, math.pi):
        raise _Reject(Reason.BAD_ARGUMENT, f"grasp pose is not at {o.id}")
    if state.agent.holding:
        raise _Reject(Reason.ALREADY_HOLDING, f"already holding {state.agent.holding}")
    return _grasp(state, o).with_event(Event("picked", o.id))


def _do_hold(state: SceneState, call: PlanCall) -> SceneState:
    obj_arg, pose_arg, agent_arg = call.positional
    _agent_arg(state, agent_arg)
    o = _object_arg(state, obj_arg)
    if o.is_human:
        raise _Reject(Reason.BAD_ARGUMENT, f"{o.id} is a whole person; hold a part such as the arm")
    target = _pose_arg(state, pose_arg, o)
    if state.agent.holding:
        raise _Reject(Reason.ALREADY_HOLDING, f"already holding {state.agent.holding}")
    _check_reach(state, target.translation, "target pose")
    out = _grasp(state, o)
    held = out.held_object()
    if not poses_close(held.pose, target, 1e-9, 1e-9):
        out = _arm_to(out, target, _exclusions(out, held))
    return out.with_event(Event("held", o.id))


def _do_place(state: SceneState, call: PlanCall) -> SceneState:
    return _put_down(state, call, "placed")


def _do_release(state: SceneState, call: PlanCall) -> SceneState:
    return _put_down(state, call, "released")


def _do_rotation(state: SceneState, call: PlanCall) -> SceneState:
    args = call.positional
    angle = _scalar_arg(state, args[-1])
    if len(args) == 1:
        o = state.held_object()
        if o is None:
            raise _Reject(Reason.NOTHING_HELD, "rotation(angle) turns the held object; nothing is held")
    else:
        o = _object_arg(state, args[0])
    pose = o.pose.rotated_about_local_z(angle)
    if o.id == state.agent.holding:
        out = replace(state, agent=replace(state.agent, end_effector=pose))
    else:
        _check_reach(state, o.pose.translation, o.id)
        out = state
    out = out.with_object(replace(o, pose=pose))
    return out.with_event(Event("rotated", o.id, value=angle))


def _do_wait(state: SceneState, call: PlanCall) -> SceneState:
    seconds = _scalar_arg(state, call.positional[0])
    if seconds < 0:
        raise _Reject(Reason.BAD_ARGUMENT, "cannot wait a negative time")
    return state.with_event(Event("waited", value=seconds), clock=state.clock + seconds)


def _do_phone_dial(state: SceneState, call: PlanCall) -> SceneState:
    number = _text_arg(state, call.positional[0])
    if not _DIAL_RE.match(number):
        raise _Reject(Reason.BAD_ARGUMENT, f"{number!r} is not a phone number")
    out = replace(state, agent=replace(state.agent, phone_dialed=number))
    if number == str(state.param("emergency_number")):
        for human in state.humans():
            if human.prop("needs_help") and (human.prop("conscious", True) is False or _unresponsive(state, human)):
                out = out.with_object(out.obj(human.id).with_props(needs_help=False, emergency_reported=True))
        if response_status(state) == "silent":
            out = replace(out, awaiting_response=False)
    return out.with_event(Event("dialed", text=number))


def _do_say(state: SceneState, call: PlanCall) -> SceneState:
    target_arg, text_arg = call.positional
    o = _object_arg(state, target_arg)
    text = _text_arg(state, text_arg)
    listener = _body(state, o)
    d = state.planar_distance(listener)
    if d > state.config.talk_range:
        raise _Reject(Reason.OUT_OF_REACH, f"{listener.id} is {d:.3f} m away, too far to talk")
    agent = replace(state.agent, partner=listener.id, said_at=state.clock)
    return state.with_event(Event("said", listener.id, text), agent=agent, awaiting_response=True)


def _do_receive_info(state: SceneState, call: PlanCall) -> SceneState:
    if not state.awaiting_response or state.agent.partner is None:
        raise _Reject(Reason.NO_PENDING_RESPONSE, "nobody has been asked anything")
    human = state.obj(state.agent.partner)
    if human is None or not next_utterance_ready(state, human):
        return state.with_event(Event("received", state.agent.partner, ""))
    utterances = list(human.prop("scripted_utterances"))
    utterance = utterances.pop(0)
    updated = human.with_props(**{**utterance.get("sets", {}), "scripted_utterances": utterances})
    out = replace(state.with_object(updated), awaiting_response=False)
    return out.with_event(Event("received", human.id, utterance["text"]))


def _do_stop(state: SceneState, call: PlanCall) -> SceneState:
    return state.with_event(Event("stopped"), terminated=True)


def _approach_point(state: SceneState, o: ObjectEntity) -> tuple:
    cfg = state.config
    c = np.asarray(o.pose.translation[:2])
    s = state.base_position
    v = c - s
    dist = float(np.linalg.norm(v))
    standoff = cfg.base_radius + state.base_footprint_section(o) + cfg.approach_margin
    if dist <= standoff:
        return (float(s[0]), float(s[1]))
    p = c - v / dist * standoff
    return (float(p[0]), float(p[1]))


def _do_move(state: SceneState, call: PlanCall) -> SceneState:
    explicit = next((v for k, v in call.keywords.items() if k.lower() == "position"), None)
    arg = call.positional[0]
    target_id = None
    if explicit is None and isinstance(arg, Ident):
        name = arg.name
        for suffix in ("_pose", "_position"):
            if name.lower().endswith(suffix) and len(name) > len(suffix):
                name = name[: -len(suffix)]
                break
        o = _object_arg(state, Ident(name))
        target_id = o.id
        goal = _approach_point(state, o)
    else:
        value = explicit if explicit is not None else arg
        if not isinstance(value, NumList) or len(value.values) not in (2, 3):
            raise _Reject(Reason.BAD_ARGUMENT, f"cannot move to {render_arg(value)}")
        goal = (float(value.values[0]), float(value.values[1]))
        if isinstance(arg, Ident):
            o = _object_arg(state, arg)
            target_id = o.id
    plan = motion.plan_base_path(state, goal)
    if isinstance(plan, motion.Blocked):
        raise _Reject(Reason.COLLISION_BLOCKED, f"path blocked by {plan.obstacle_id}")
    out = motion.advance(state, plan)
    return out.with_event(Event("moved", target_id or "base", value=plan.total_length))


def _do_move_arm(state: SceneState, call: PlanCall) -> SceneState:
    target = _pose_arg(state, call.positional[0], state.held_object())
    exclude = _exclusions(state, state.held_object()) if state.held_object() else set()
    out = _arm_to(state, target, exclude)
    return out.with_event(Event("moved", "arm", value=float(np.linalg.norm(target.position - state.agent.end_effector.position))))


_HANDLERS = {
    "pick": _do_pick,
    "place": _do_place,
    "hold": _do_hold,
    "release": _do_release,
    "rotation": _do_rotation,
    "wait": _do_wait,
    "phone_dial": _do_phone_dial,
    "say": _do_say,
    "receive_info": _do_receive_info,
    "stop": _do_stop,
    "move": _do_move,
    "move_base": _do_move,
    "move_arm": _do_move_arm,
}


def apply_action(state: SceneState, call: PlanCall, registry: FunctionRegistry | None = None) -> SceneState | Inadmissible:
    """M(s, a): the successor state, or the reason ``call`` is not admissible in ``state``.

    Never modifies ``state``. A successful transition appends exactly one event.
    """
    registry = registry or _REGISTRY
    if state.terminated:
        return Inadmissible(Reason.TERMINATED, "episode already stopped")
    violations = validate(call, registry, state)
    if violations:
        reason = Reason.UNKNOWN_OBJECT if any(v.kind == "unknown_object" for v in violations) else Reason.BAD_ARGUMENT
        return Inadmissible(reason, "; ".join(v.detail for v in violations))
    handler = _HANDLERS.get(call.name)
    if handler is None:
        return Inadmissible(Reason.BAD_ARGUMENT, f"no semantics for {call.name!r}")
    try:
        out = handler(state, call)
    except _Reject as rej:
        return rej.result
    return out.refresh_seen()


def is_admissible(state: SceneState, call: PlanCall, registry: FunctionRegistry | None = None) -> tuple[bool, Inadmissible | None]:
    result = apply_action(state, call, registry)
    if isinstance(result, Inadmissible):
        return False, result
    return True, None


# ----------------------------------------------------------------------- goals


@dataclass(frozen=True)
class PoseAt:
    object: str
    pose: Pose6DoF
    tol_m: float = TARGET_TOL_M
    tol_rad: float = TARGET_TOL_RAD


@dataclass(frozen=True)
class Held:
    object: str


@dataclass(frozen=True)
class NotHeld:
    object: str


@dataclass(frozen=True)
class EventSeen:
    """An event matching kind, and target/text glob patterns (None matches anything)."""

    kind: str
    target: str | None = None
    text: str | None = None


@dataclass(frozen=True)
class NoEvent:
    kinds: tuple


@dataclass(frozen=True)
class PropertyIs:
    object: str
    key: str
    value: Any


@dataclass(frozen=True)
class Stopped:
    pass


GoalCondition = Union[PoseAt, Held, NotHeld, EventSeen, NoEvent, PropertyIs, Stopped]


def _event_matches(e: Event, goal: EventSeen) -> bool:
    if e.kind != goal.kind:
        return False
    if goal.target is not None and not fnmatch.fnmatchcase(e.target or "", goal.target):
        return False
    if goal.text is not None and not fnmatch.fnmatchcase(e.text or "", goal.text):
        return False
    return True


def satisfies(state: SceneState, goal: GoalCondition) -> bool:
    if isinstance(goal, PoseAt):
        o = state.obj(goal.object)
        return o is not None and (
            float(np.linalg.norm(o.pose.position - goal.pose.position)) <= goal.tol_m
            and rotation_angle(o.pose.rotation, goal.pose.rotation) <= goal.tol_rad
        )
    if isinstance(goal, Held):
        return state.agent.holding == goal.object
    if isinstance(goal, NotHeld):
        return state.agent.holding != goal.object
    if isinstance(goal, EventSeen):
        return any(_event_matches(e, goal) for e in state.event_log)
    if isinstance(goal, NoEvent):
        return not any(e.kind in goal.kinds for e in state.event_log)
    if isinstance(goal, PropertyIs):
        o = state.obj(goal.object)
        return o is not None and o.prop(goal.key) == goal.value
    if isinstance(goal, Stopped):
        return state.terminated
    raise TypeError(f"not a goal condition: {goal!r}")


def goal_objects(goal: GoalCondition) -> list[str]:
    obj = getattr(goal, "object", None)
    return [obj] if obj else []


def goal_from_dict(d: dict) -> GoalCondition:
    kind = d["type"]
    if kind == "pose_at":
        return PoseAt(
            d["object"],
            Pose6DoF.from_dict(d["pose"]),
            float(d.get("tol_m", TARGET_TOL_M)),
            math.radians(float(d["tol_deg"])) if "tol_deg" in d else TARGET_TOL_RAD,
        )
    if kind == "held":
        return Held(d["object"])
    if kind == "not_held":
        return NotHeld(d["object"])
    if kind == "event":
        return EventSeen(d["kind"], d.get("target"), d.get("text"))
    if kind == "no_event":
        return NoEvent(tuple(d["kinds"]))
    if kind == "property_is":
        return PropertyIs(d["object"], d["key"], d.get("value"))
    if kind == "stopped":
        return Stopped()
    raise ValueError(f"unknown goal type {kind!r}")


def goal_to_dict(goal: GoalCondition) -> dict:
    if isinstance(goal, PoseAt):
        d = {"type": "pose_at", "object": goal.object, "pose": goal.pose.to_dict(), "tol_m": goal.tol_m}
        if goal.tol_rad != TARGET_TOL_RAD:
            d["tol_deg"] = math.degrees(goal.tol_rad)
        return d
    if isinstance(goal, Held):
        return {"type": "held", "object": goal.object}
    if isinstance(goal, NotHeld):
        return {"type": "not_held", "object": goal.object}
    if isinstance(goal, EventSeen):
        d = {"type": "event", "kind": goal.kind}
        if goal.target is not None:
            d["target"] = goal.target
        if goal.text is not None:
            d["text"] = goal.text
        return d
    if isinstance(goal, NoEvent):
        return {"type": "no_event", "kinds": list(goal.kinds)}
    if isinstance(goal, PropertyIs):
        return {"type": "property_is", "object": goal.object, "key": goal.key, "value": goal.value}
    if isinstance(goal, Stopped):
        return {"type": "stopped"}
    raise TypeError(f"not a goal condition: {goal!r}")

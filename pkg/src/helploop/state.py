"""Symbolic scene state: objects, agent configuration, clock and event log.

All types are immutable values; transitions build new ones with
:func:`dataclasses.replace`. Object properties must hold JSON-native values
only (no tuples) so that serialization round-trips to equal values.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

import numpy as np

from .geometry import Pose6DoF, Shape, floor_section, shape_from_geometry

AGENT = "agent"
AGENT_ALIASES = frozenset({"agent", "robot", "robot_hand", "robot_arm", "hand"})

DEFAULT_PARAMETERS = {
    "second": 5,
    "angle": 90,
    "number": "120",
    "context": "Do you need any help?",
    "emergency_number": "120",
    "far_threshold": 2.0,
}


@dataclass(frozen=True)
class WorldConfig:
    reach_radius: float = 0.9
    base_radius: float = 0.35
    arm_sweep_radius: float = 0.05
    base_speed: float = 0.5
    arm_speed: float = 0.25
    max_step: float = 0.1
    talk_range: float = 2.0
    approach_margin: float = 0.05


@dataclass(frozen=True)
class Event:
    kind: str  # said received waited dialed picked placed held released rotated moved stopped
    target: str | None = None
    text: str | None = None
    value: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        return cls(d["kind"], d.get("target"), d.get("text"), d.get("value"))

    def __str__(self) -> str:
        inner = ", ".join(repr(v) if isinstance(v, str) else str(v) for v in (self.target, self.text, self.value) if v is not None)
        return f"{self.kind.capitalize()}({inner})"


@dataclass(frozen=True)
class ObjectEntity:
    id: str
    cls: str
    pose: Pose6DoF
    geometry: dict | None = None
    properties: dict = field(default_factory=dict)

    def prop(self, key: str, default: Any = None) -> Any:
        return self.properties.get(key, default)

    def with_props(self, **updates) -> "ObjectEntity":
        props = dict(self.properties)
        for key, value in updates.items():
            if value is None:
                props.pop(key, None)
            else:
                props[key] = value
        return replace(self, properties=props)

    @property
    def shape(self) -> Shape | None:
        return shape_from_geometry(self.geometry, self.pose.translation)

    @property
    def is_human(self) -> bool:
        return self.cls.lower() == "human"

    @property
    def phrase(self) -> str:
        return self.prop("phrase") or self.cls.replace("_", " ")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "class": self.cls,
            "pose": self.pose.to_dict(),
            "geometry": self.geometry,
            "properties": self.properties,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectEntity":
        return cls(
            id=d["id"],
            cls=d["class"],
            pose=Pose6DoF.from_dict(d["pose"]),
            geometry=d.get("geometry"),
            properties=dict(d.get("properties") or {}),
        )


@dataclass(frozen=True)
class AgentState:
    base: tuple = (0.0, 0.0)
    heading: float = 0.0
    end_effector: Pose6DoF = field(default_factory=lambda: Pose6DoF((0.3, 0.0, 0.6)))
    holding: str | None = None
    phone_dialed: str | None = None
    partner: str | None = None
    said_at: float | None = None

    def to_dict(self) -> dict:
        return {
            "base": list(self.base),
            "heading": self.heading,
            "end_effector": self.end_effector.to_dict(),
            "holding": self.holding,
            "phone_dialed": self.phone_dialed,
            "partner": self.partner,
            "said_at": self.said_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentState":
        return cls(
            base=tuple(float(c) for c in d.get("base", (0.0, 0.0))),
            heading=float(d.get("heading", 0.0)),
            end_effector=Pose6DoF.from_dict(d["end_effector"]) if "end_effector" in d else Pose6DoF((0.3, 0.0, 0.6)),
            holding=d.get("holding"),
            phone_dialed=d.get("phone_dialed"),
            partner=d.get("partner"),
            said_at=d.get("said_at"),
        )


@dataclass(frozen=True)
class SceneState:
    objects: tuple = ()
    agent: AgentState = field(default_factory=AgentState)
    clock: float = 0.0
    event_log: tuple = ()
    awaiting_response: bool = False
    terminated: bool = False
    parameters: dict = field(default_factory=lambda: dict(DEFAULT_PARAMETERS))
    config: WorldConfig = field(default_factory=WorldConfig)
    seen: tuple = ()

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object ids: {ids}")
        object.__setattr__(self, "objects", tuple(sorted(self.objects, key=lambda o: o.id)))

    # -- lookup -------------------------------------------------------------

    def obj(self, object_id: str) -> ObjectEntity | None:
        for o in self.objects:
            if o.id == object_id:
                return o
        return None

    def parent_of(self, o: ObjectEntity) -> ObjectEntity | None:
        parent = o.prop("part_of")
        return self.obj(parent) if parent else None

    def perceivable(self, o: ObjectEntity) -> bool:
        body = self.parent_of(o) or o
        return bool(body.prop("in_sight", True) or body.prop("audible_distress", False))

    def known(self, o: ObjectEntity) -> bool:
        return self.perceivable(o) or o.id in self.seen

    @property
    def base_position(self) -> np.ndarray:
        return np.asarray(self.agent.base, dtype=float)

    def planar_distance(self, o: ObjectEntity) -> float:
        return float(np.linalg.norm(np.asarray(o.pose.translation[:2]) - self.base_position))

    def distance_to_agent(self, o: ObjectEntity) -> float:
        return self.planar_distance(o)

    def resolve_object(self, symbol: str) -> ObjectEntity | str | None:
        """Bind a plan symbol to an object (or AGENT): exact id first, then class label nearest to the agent."""
        low = symbol.lower()
        if low in AGENT_ALIASES:
            return AGENT
        for o in self.objects:
            if o.id.lower() == low:
                return o if self.known(o) else None
        matches = [o for o in self.objects if o.cls.lower() == low and self.known(o)]
        if not matches:
            return None
        return min(matches, key=lambda o: (self.planar_distance(o), o.id))

    def has_symbol(self, name: str) -> bool:
        return self.resolve_object(name) is not None

    def held_object(self) -> ObjectEntity | None:
        return self.obj(self.agent.holding) if self.agent.holding else None

    def humans(self) -> list[ObjectEntity]:
        return [o for o in self.objects if o.is_human]

    def base_footprint_section(self, o: ObjectEntity) -> float:
        """Radius of the object's footprint on the floor (0 if it has none)."""
        shape = o.shape
        section = floor_section(shape) if shape is not None else None
        if section is None:
            return 0.0
        if hasattr(section, "radius"):
            return section.radius
        return float(np.linalg.norm(np.asarray(section.hi) - np.asarray(section.lo)) / 2)

    # -- updates ------------------------------------------------------------

    def with_object(self, o: ObjectEntity) -> "SceneState":
        return replace(self, objects=tuple(o if x.id == o.id else x for x in self.objects))

    def with_event(self, event: Event, **changes) -> "SceneState":
        return replace(self, event_log=self.event_log + (event,), **changes)

    def refresh_seen(self) -> "SceneState":
        seen = set(self.seen) | {o.id for o in self.objects if self.perceivable(o)}
        return replace(self, seen=tuple(sorted(seen)))

    def param(self, key: str, default: Any = None) -> Any:
        return self.parameters.get(key, DEFAULT_PARAMETERS.get(key, default))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "objects": [o.to_dict() for o in self.objects],
            "agent": self.agent.to_dict(),
            "clock": self.clock,
            "event_log": [e.to_dict() for e in self.event_log],
            "awaiting_response": self.awaiting_response,
            "terminated": self.terminated,
            "parameters": self.parameters,
            "config": asdict(self.config),
            "seen": list(self.seen),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneState":
        known = {f.name for f in fields(WorldConfig)}
        return cls(
            objects=tuple(ObjectEntity.from_dict(o) for o in d.get("objects", [])),
            agent=AgentState.from_dict(d.get("agent", {})),
            clock=float(d.get("clock", 0.0)),
            event_log=tuple(Event.from_dict(e) for e in d.get("event_log", [])),
            awaiting_response=bool(d.get("awaiting_response", False)),
            terminated=bool(d.get("terminated", False)),
            parameters={**DEFAULT_PARAMETERS, **(d.get("parameters") or {})},
            config=WorldConfig(**{k: v for k, v in (d.get("config") or {}).items() if k in known}),
            seen=tuple(d.get("seen", ())),
        )

    def canonical_json(self) -> str:
        return canonical_json(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def is_finite_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)

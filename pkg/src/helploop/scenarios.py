"""Scenario and trace files, the bundled corpus, and the ground-truth refresh tool.

Scenario files are key-sorted JSON with ``"schema": 1``. Trace files are JSON
lines: a header object, then one object per step, each carrying a hash that
chains it to the line before.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from . import __version__
from .dsl import PlanSyntaxError, parse_call
from .loop import RunTrace, TraceStep
from .metrics import task_type
from .perception import AblationFlags, summarize_state
from .state import DEFAULT_PARAMETERS, AgentState, ObjectEntity, SceneState, WorldConfig, canonical_json
from .world import Inadmissible, apply_action, goal_from_dict, goal_objects, goal_to_dict

SCHEMA_VERSION = 1
COMPLEXITIES = ("NoHarm", "Easy", "Medium", "Hard")
TRACE_FORMAT = "helploop-trace"


class IoError(OSError):
    pass


class SchemaError(ValueError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class ReplayError(ValueError):
    pass


class DigestMismatch(ValueError):
    pass


_POSE = {
    "type": "object",
    "required": ["translation"],
    "properties": {
        "translation": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        "rotation": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema", "id", "complexity", "objects", "agent", "goals", "ground_truth"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "id": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "complexity": {"enum": list(COMPLEXITIES)},
        "description": {"type": "string"},
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "class", "pose"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "pattern": "^[A-Za-z_][A-Za-z0-9_]*$"},
                    "class": {"type": "string", "minLength": 1},
                    "pose": _POSE,
                    "geometry": {
                        "oneOf": [
                            {"type": "null"},
                            {
                                "type": "object",
                                "required": ["sphere"],
                                "properties": {"sphere": {"type": "number", "exclusiveMinimum": 0}},
                                "additionalProperties": False,
                            },
                            {
                                "type": "object",
                                "required": ["box"],
                                "properties": {
                                    "box": {
                                        "type": "array",
                                        "items": {"type": "number", "exclusiveMinimum": 0},
                                        "minItems": 3,
                                        "maxItems": 3,
                                    }
                                },
                                "additionalProperties": False,
                            },
                        ]
                    },
                    "properties": {
                        "type": "object",
                        "properties": {
                            "needs_help": {"type": "boolean"},
                            "conscious": {"type": "boolean"},
                            "in_sight": {"type": "boolean"},
                            "audible_distress": {"type": "boolean"},
                            "is_obstacle": {"type": "boolean"},
                            "condition": {"type": "string"},
                            "condition_known": {"type": "boolean"},
                            "no_response_after": {"type": "number", "minimum": 0},
                            "scripted_utterances": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "required": ["available_after", "text"],
                                    "properties": {
                                        "available_after": {"type": "number", "minimum": 0},
                                        "text": {"type": "string"},
                                        "sets": {"type": "object"},
                                    },
                                    "additionalProperties": False,
                                },
                            },
                            "target_pose": _POSE,
                            "on_target": {"type": "object", "additionalProperties": {"type": "object"}},
                        },
                    },
                },
            },
        },
        "agent": {
            "type": "object",
            "properties": {
                "base": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "heading": {"type": "number"},
                "end_effector": _POSE,
            },
            "additionalProperties": False,
        },
        "parameters": {"type": "object"},
        "config": {"type": "object"},
        "goals": {"type": "array", "items": {"type": "object", "required": ["type"]}},
        "ground_truth": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["function"],
                "properties": {
                    "state": {"type": "string"},
                    "action": {"type": "string"},
                    "function": {"type": "string"},
                    "digest": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
        "metadata": {"type": "object"},
    },
}


@dataclass(frozen=True)
class GroundTruthStep:
    state: str
    action: str
    function: str
    digest: str

    def to_dict(self) -> dict:
        return {"state": self.state, "action": self.action, "function": self.function, "digest": self.digest}


@dataclass(frozen=True)
class Scenario:
    id: str
    complexity: str
    initial_state: SceneState
    goals: tuple
    ground_truth: tuple
    description: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def task_types(self) -> list[str]:
        return list(self.metadata.get("task_types", []))

    def to_dict(self) -> dict:
        s = self.initial_state
        d = {
            "schema": SCHEMA_VERSION,
            "id": self.id,
            "complexity": self.complexity,
            "description": self.description,
            "objects": [o.to_dict() for o in s.objects],
            "agent": {
                "base": list(s.agent.base),
                "heading": s.agent.heading,
                "end_effector": s.agent.end_effector.to_dict(),
            },
            "parameters": {k: v for k, v in s.parameters.items() if DEFAULT_PARAMETERS.get(k, object()) != v},
            "goals": [goal_to_dict(g) for g in self.goals],
            "ground_truth": [g.to_dict() for g in self.ground_truth],
            "metadata": self.metadata,
        }
        cfg = {k: v for k, v in vars(s.config).items() if getattr(WorldConfig(), k) != v}
        if cfg:
            d["config"] = cfg
        return d


def _field_path(error: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in error.absolute_path) if error.absolute_path else "/"


def scenario_from_dict(d: Any, verify: bool = True) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
    if errors:
        raise SchemaError(_field_path(errors[0]), errors[0].message)
    try:
        objects = tuple(ObjectEntity.from_dict(o) for o in d["objects"])
        [o.shape for o in objects]  # geometry must build
        state = SceneState(
            objects=objects,
            agent=AgentState.from_dict(d["agent"]),
            parameters={**DEFAULT_PARAMETERS, **d.get("parameters", {})},
            config=WorldConfig(**d.get("config", {})),
        ).refresh_seen()
    except (ValueError, TypeError) as exc:
        raise SchemaError("/objects", str(exc)) from exc
    goals = []
    for i, g in enumerate(d["goals"]):
        try:
            goal = goal_from_dict(g)
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"/goals/{i}", f"bad goal: {exc}") from exc
        for ref in goal_objects(goal):
            if state.obj(ref) is None:
                raise SchemaError(f"/goals/{i}", f"unknown object {ref!r}")
        goals.append(goal)
    truth = tuple(
        GroundTruthStep(g.get("state", ""), g.get("action", ""), g["function"], g.get("digest", "")) for g in d["ground_truth"]
    )
    scenario = Scenario(d["id"], d["complexity"], state, tuple(goals), truth, d.get("description", ""), dict(d.get("metadata", {})))
    if verify:
        replay_ground_truth(scenario, check_digests=True)
    return scenario


def replay_ground_truth(scenario: Scenario, check_digests: bool = True) -> list[SceneState]:
    """States after each ground-truth step; raises ReplayError on any inadmissible or stale step."""
    state = scenario.initial_state
    states = []
    for i, gt in enumerate(scenario.ground_truth):
        try:
            call = parse_call(gt.function)
        except PlanSyntaxError as exc:
            raise ReplayError(f"ground_truth[{i}] {gt.function!r} does not parse: {exc}") from exc
        nxt = apply_action(state, call)
        if isinstance(nxt, Inadmissible):
            raise ReplayError(f"ground_truth[{i}] {gt.function!r} is inadmissible: {nxt}")
        if check_digests and gt.digest != nxt.digest():
            raise ReplayError(f"ground_truth[{i}] digest is stale; refresh the scenario file")
        states.append(nxt)
        state = nxt
    return states


def refresh_ground_truth(scenario: Scenario) -> Scenario:
    """Recompute ground-truth state texts, digests and task types by replaying the functions."""
    states = replay_ground_truth(scenario, check_digests=False)
    pre_states = [scenario.initial_state] + states[:-1]
    calls = [parse_call(g.function) for g in scenario.ground_truth]
    steps = []
    for i, (gt, pre, post) in enumerate(zip(scenario.ground_truth, pre_states, states)):
        text = summarize_state(pre, calls[:i], AblationFlags()).text
        steps.append(GroundTruthStep(text, gt.action, gt.function, post.digest()))
    metadata = dict(scenario.metadata)
    metadata["task_types"] = [task_type(c, pre) for c, pre in zip(calls, pre_states)]
    return replace(scenario, ground_truth=tuple(steps), metadata=metadata)


def _read_text(path: str | os.PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def load_scenario(path: str | os.PathLike, verify: bool = True) -> Scenario:
    text = _read_text(path)
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {exc.lineno} column {exc.colno}", exc.msg) from exc
    return scenario_from_dict(d, verify=verify)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory and rename over the target."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def scenario_json(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_scenario(scenario: Scenario, path: str | os.PathLike) -> None:
    atomic_write_text(path, scenario_json(scenario))


# ---------------------------------------------------------------- corpus


def corpus_dir() -> Path:
    return Path(str(resources.files("helploop").joinpath("data", "corpus")))


def load_corpus(directory: str | os.PathLike) -> list[Scenario]:
    if not Path(directory).is_dir():
        raise IoError(f"{directory} is not a directory")
    paths = sorted(Path(directory).glob("*.json"))
    return sorted((load_scenario(p) for p in paths), key=lambda s: s.id)


def bundled_corpus() -> list[Scenario]:
    return load_corpus(corpus_dir())


def find_scenario(name: str) -> Scenario:
    """A scenario file path, or the id of a bundled scenario."""
    if os.path.exists(name):
        return load_scenario(name)
    candidate = corpus_dir() / f"{name}.json"
    if candidate.exists():
        return load_scenario(candidate)
    raise IoError(f"no scenario file or bundled scenario named {name!r}")


# ---------------------------------------------------------------- traces


def _chain(prev: str, record: dict) -> str:
    return hashlib.sha256((prev + canonical_json(record)).encode("utf-8")).hexdigest()


def trace_lines(trace: RunTrace) -> list[str]:
    header = {
        "format": TRACE_FORMAT,
        "version": __version__,
        "scenario_id": trace.scenario_id,
        "backend": trace.backend_id,
        "seed": trace.seed,
        "flags": {"include_action": trace.flags.include_action, "include_history": trace.flags.include_history},
        "terminated_by": trace.terminated_by,
        "tasks": [t.to_dict() for t in trace.tasks],
        "initial_state": trace.initial_state.to_dict(),
        "final_state": trace.final_state.to_dict(),
    }
    records = [header] + [s.to_dict() for s in trace.steps]
    lines = []
    prev = ""
    for rec in records:
        prev = _chain(prev, rec)
        lines.append(canonical_json({**rec, "chain": prev}))
    return lines


def save_trace(trace: RunTrace, path: str | os.PathLike) -> None:
    atomic_write_text(path, "\n".join(trace_lines(trace)) + "\n")


def load_trace(path: str | os.PathLike) -> RunTrace:
    from .perception import Task

    lines = [line for line in _read_text(path).splitlines() if line.strip()]
    if not lines:
        raise SchemaError("line 1", "empty trace file")
    records = []
    prev = ""
    for n, line in enumerate(lines, 1):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DigestMismatch(f"line {n}: not valid JSON ({exc.msg})") from exc
        if not isinstance(rec, dict) or "chain" not in rec:
            raise DigestMismatch(f"line {n}: missing chain hash")
        chain = rec.pop("chain")
        prev = _chain(prev, rec)
        if chain != prev:
            raise DigestMismatch(f"line {n}: chain hash does not match content")
        records.append(rec)
    header, steps = records[0], records[1:]
    if header.get("format") != TRACE_FORMAT:
        raise SchemaError("line 1", "not a trace file header")
    mismatch = header.get("version") != __version__
    if mismatch:
        warnings.warn(f"trace written by version {header.get('version')}, reading with {__version__}", stacklevel=2)
    try:
        parsed = tuple(TraceStep.from_dict(s) for s in steps)
        final_state = SceneState.from_dict(header["final_state"])
    except (KeyError, ValueError, PlanSyntaxError) as exc:
        raise SchemaError("steps", str(exc)) from exc
    if parsed and parsed[-1].state_after_digest != final_state.digest():
        raise DigestMismatch("final state does not match the last step digest")
    flags = AblationFlags(**header["flags"])
    return RunTrace(
        header["scenario_id"],
        header["backend"],
        flags,
        header["seed"],
        parsed,
        header["terminated_by"],
        SceneState.from_dict(header["initial_state"]),
        final_state,
        tuple(Task.from_dict(t) for t in header.get("tasks", [])),
        version_warning=mismatch,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="python -m helploop.scenarios", description="Scenario authoring tools.")
    sub = parser.add_subparsers(dest="command", required=True)
    refresh = sub.add_parser("refresh", help="recompute ground-truth state texts and digests in place")
    refresh.add_argument("paths", nargs="+")
    args = parser.parse_args(argv)
    for path in args.paths:
        scenario = load_scenario(path, verify=False)
        save_scenario(refresh_ground_truth(scenario), path)
        print(f"refreshed {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

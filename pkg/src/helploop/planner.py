"""Triplet prompt assembly, completion parsing and the in-process planner backends."""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Protocol, Sequence

from .dsl import FunctionRegistry, Ident, Kw, PlanCall, Role, default_registry, parse_call, render
from .perception import QUESTION, AblationFlags, StateText, state_predicates
from .state import AGENT, AGENT_ALIASES, ObjectEntity, SceneState


class NoFunctionLine(ValueError):
    pass


class NoMatchingExemplar(LookupError):
    pass


@dataclass(frozen=True)
class Exemplar:
    state_text: str
    action_text: str
    function_text: str
    # layout of the block as printed in the bundled prompt
    state_sep: str = ": "
    field_sep: str = ": "
    blank_after: int = 1

    def block(self, include_action: bool = True) -> str:
        lines = [f'state{self.state_sep}"{self.state_text}"']
        if include_action:
            lines.append(f'action{self.field_sep}"{self.action_text}"')
        lines.append(f'function{self.field_sep}"{self.function_text}"')
        return "\n".join(lines) + "\n" + "\n" * self.blank_after

    @property
    def call(self) -> PlanCall:
        return parse_call(self.function_text)

    @property
    def predicates(self) -> frozenset:
        return state_predicates(self.state_text)


@lru_cache(maxsize=1)
def _data() -> tuple[str, tuple]:
    root = resources.files("helploop").joinpath("data")
    preamble = root.joinpath("preamble.txt").read_text(encoding="utf-8")
    raw = json.loads(root.joinpath("exemplars.json").read_text(encoding="utf-8"))
    exemplars = tuple(
        Exemplar(e["state"], e["action"], e["function"], e["state_sep"], e["field_sep"], e["blank_after"])
        for e in raw["exemplars"]
    )
    return preamble, exemplars


def default_exemplars() -> list[Exemplar]:
    return list(_data()[1])


FORMAT_TEMPLATE = Exemplar("", "", "")


def build_prompt(
    state_text: StateText | str,
    exemplars: Sequence[Exemplar] | None = None,
    flags: AblationFlags | None = None,
) -> str:
    flags = flags or AblationFlags()
    preamble, bundled = _data()
    exemplars = bundled if exemplars is None else exemplars
    if not exemplars:
        raise ValueError("at least one exemplar is required")
    if isinstance(state_text, str):
        state_text = StateText.parse(state_text)
    parts = [preamble, FORMAT_TEMPLATE.block(flags.include_action)]
    parts.extend(e.block(flags.include_action) for e in exemplars)
    if parts[-1].endswith("\n\n"):
        parts[-1] = parts[-1].rstrip("\n") + "\n"
    parts.append(f'Question:\nstate: "{state_text.body} {QUESTION}"\n')
    return "".join(parts)


_FIELD_RE = re.compile(r'^\s*(action|function)\s*:\s*(.*?)\s*$')


def _unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'`":
        return value[1:-1].strip()
    return value


def extract_function(completion: str) -> tuple[str | None, PlanCall]:
    """The first ``function:`` line of a completion, parsed, and the ``action:`` line before it."""
    action = None
    for line in completion.splitlines():
        m = _FIELD_RE.match(line)
        if not m:
            continue
        if m.group(1) == "action":
            action = _unquote(m.group(2))
        else:
            return action, parse_call(_unquote(m.group(2)))
    raise NoFunctionLine("completion has no function: line")


def format_completion(action_text: str | None, call: PlanCall) -> str:
    lines = [f'action: "{action_text}"'] if action_text is not None else []
    lines.append(f'function: "{render(call)}"')
    return "\n".join(lines)


def question_state(prompt: str) -> StateText:
    """Recover the state text from the question line of a planner prompt."""
    for line in reversed(prompt.splitlines()):
        m = re.match(r'\s*state\s*:\s*"(.*)"\s*$', line)
        if m:
            return StateText.parse(m.group(1))
    raise NoMatchingExemplar("prompt has no question state line")


# --------------------------------------------------------------- grounding


def _ground_symbol(name: str, state: SceneState) -> str:
    if name.lower() in AGENT_ALIASES:
        return AGENT
    resolved = state.resolve_object(name)
    return resolved.id if isinstance(resolved, ObjectEntity) else name


def _ground_pose_symbol(name: str, state: SceneState) -> str:
    low = name.lower()
    for suffix in ("_pose", "_position"):
        if low.endswith(suffix) and len(low) > len(suffix):
            stem = name[: -len(suffix)]
            resolved = state.resolve_object(stem)
            if isinstance(resolved, ObjectEntity):
                return resolved.id + suffix
            return name
    return name


def ground_call(call: PlanCall, state: SceneState, registry: FunctionRegistry | None = None) -> PlanCall:
    """Bind exemplar symbols (human, chair, arm_pose ...) to the scene's object ids."""
    registry = registry or default_registry()
    sig = registry.get(call.name)
    form = sig.form_for(len(call.positional)) if sig else None
    args = []
    pos = 0
    for arg in call.args:
        value = arg.value if isinstance(arg, Kw) else arg
        role = None
        if isinstance(arg, Kw):
            role = sig.keyword_role(arg.key) if sig else None
        elif form is not None:
            role = form[pos]
            pos += 1
        if isinstance(value, Ident):
            if role == Role.OBJECT:
                value = Ident(_ground_symbol(value.name, state))
            else:
                value = Ident(_ground_pose_symbol(value.name, state))
        args.append(Kw(arg.key, value) if isinstance(arg, Kw) else value)
    return PlanCall(call.name, tuple(args))


# ---------------------------------------------------------------- policies


def match_exemplar(predicates: frozenset, exemplars: Sequence[Exemplar] | None = None) -> Exemplar:
    """Largest exemplar predicate set contained in ``predicates``; ties go to the smaller function text."""
    exemplars = default_exemplars() if exemplars is None else exemplars
    candidates = [e for e in exemplars if e.predicates <= predicates]
    if not candidates:
        raise NoMatchingExemplar(f"no exemplar matches {sorted(predicates)}")
    return min(candidates, key=lambda e: (-len(e.predicates), e.function_text))


def next_step_scripted(
    state_text: StateText | str,
    state: SceneState | None = None,
    exemplars: Sequence[Exemplar] | None = None,
) -> tuple[str, PlanCall]:
    ex = match_exemplar(state_predicates(state_text), exemplars)
    call = ex.call
    if state is not None:
        call = ground_call(call, state)
    return ex.action_text, call


class PlannerBackend(Protocol):
    backend_id: str

    def complete(self, prompt: str, state: SceneState | None = None) -> str: ...


class ScriptedBackend:
    """The exemplar table as a deterministic policy; reads the state from the prompt's question line."""

    backend_id = "scripted"

    def __init__(self, exemplars: Sequence[Exemplar] | None = None):
        self.exemplars = list(exemplars) if exemplars is not None else None

    def complete(self, prompt: str, state: SceneState | None = None) -> str:
        action, call = next_step_scripted(question_state(prompt), state, self.exemplars)
        return format_completion(action, call)


class RandomBackend:
    """Uniform over registry functions; each argument uniform over the scene's symbols."""

    def __init__(self, seed: int = 0, registry: FunctionRegistry | None = None):
        self.seed = seed
        self.backend_id = f"random:{seed}"
        self.registry = registry or default_registry()
        self._rng = random.Random(seed)

    def symbol_pool(self, state: SceneState | None) -> list[str]:
        pool = [AGENT, "target_pose", "second", "angle", "number", "context"]
        if state is not None:
            for o in state.objects:
                if state.known(o):
                    pool.extend([o.id, f"{o.id}_pose"])
        return sorted(set(pool))

    def draw(self, state: SceneState | None = None) -> PlanCall:
        name = self._rng.choice(self.registry.names())
        sig = self.registry.get(name)
        form = self._rng.choice(sig.forms)
        pool = self.symbol_pool(state)
        return PlanCall(name, tuple(Ident(self._rng.choice(pool)) for _ in form))

    def complete(self, prompt: str, state: SceneState | None = None) -> str:
        return format_completion("random", self.draw(state))


def random_baseline(seed: int = 0) -> RandomBackend:
    return RandomBackend(seed)

"""Task generation: scene summary text, need-help detection and task descriptions.

The detector is a rule oracle over scenario ground truth. The prompt builders
produce the text an external vision-language model would be asked, so a model
client can stand in for the oracle.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

from .dsl import Ident, PlanCall
from .state import AGENT, ObjectEntity, SceneState
from .world import response_status

QUESTION = "what should you do next?"
WATCH_PREFIX = "you need to watch out ["
SCENE_PROMPT = "<Scene> You are a helpful person. Now you see the scene. Do you think you should offer extra help?"
PERSON_PROMPT = "<Scene> You are a helpful person. Does {} need assist in this picture?"

# verb used in history clauses, per object-manipulating function
HISTORY_VERBS = {"pick": "pick", "place": "place", "hold": "hold", "release": "release", "rotation": "rotate"}


class UnknownTemplateIndex(IndexError):
    pass


class UnknownClause(ValueError):
    pass


@dataclass(frozen=True)
class AblationFlags:
    include_action: bool = True
    include_history: bool = True


@dataclass(frozen=True)
class StateText:
    clauses: tuple

    @property
    def text(self) -> str:
        return "; ".join(self.clauses)

    @property
    def body(self) -> str:
        """The text with the closing question removed, as substituted into the planner prompt."""
        return "; ".join(self.clauses[:-1]) + ";"

    def __str__(self) -> str:
        return self.text

    @classmethod
    def parse(cls, text: str) -> "StateText":
        text = text.strip()
        if not text.startswith(WATCH_PREFIX) or not text.endswith(QUESTION):
            raise UnknownClause(f"not a state text: {text!r}")
        return cls(tuple(c.strip() for c in text.split(";")))


@dataclass(frozen=True)
class HelpAssessment:
    needs_help: bool
    targets: tuple = ()  # (person id, pose)
    rationale: str = ""


@dataclass(frozen=True)
class Task:
    id: str
    description: str
    target: str
    created_at: float

    def to_dict(self) -> dict:
        return {"id": self.id, "description": self.description, "target": self.target, "created_at": self.created_at}

    @classmethod
    def from_dict(cls, d: dict) -> "Task":
        return cls(d["id"], d["description"], d["target"], float(d["created_at"]))


# ------------------------------------------------------------------ detection


def detect_need_help(state: SceneState) -> HelpAssessment:
    targets = []
    reasons = []
    for h in state.humans():
        if not h.prop("needs_help", False):
            continue
        if h.prop("in_sight", True):
            reasons.append(f"{h.id} is visible and needs help")
        elif h.prop("audible_distress", False):
            reasons.append(f"{h.id} is out of sight but heard calling for help")
        else:
            continue
        targets.append((h.id, h.pose))
    if not targets:
        return HelpAssessment(False, (), "nobody in view or earshot needs help")
    return HelpAssessment(True, tuple(targets), "; ".join(reasons))


def focus_human(state: SceneState, assessment: HelpAssessment | None = None) -> ObjectEntity | None:
    """The person the robot is attending to: the conversation partner, else the nearest target."""
    assessment = assessment or detect_need_help(state)
    ids = [t[0] for t in assessment.targets]
    if state.agent.partner in ids:
        return state.obj(state.agent.partner)
    people = [state.obj(i) for i in ids]
    if not people:
        return None
    return min(people, key=lambda h: (state.planar_distance(h), h.id))


# -------------------------------------------------------------- state summary


def _watch_clause(state: SceneState) -> str:
    ids = [o.id for o in state.objects if o.prop("is_obstacle", False) and state.known(o)]
    return WATCH_PREFIX + "".join(f"{i}, " for i in ids) + "]"


def _part_held(state: SceneState, human: ObjectEntity) -> bool:
    held = state.held_object()
    return held is not None and held.prop("part_of") == human.id


def _behind_closed_door(state: SceneState, human: ObjectEntity) -> bool:
    door = state.obj(human.prop("behind") or "")
    return door is not None and not door.prop("open", False)


def _history_subject(call: PlanCall, state: SceneState) -> ObjectEntity | None:
    if call.name == "rotation" and len(call.positional) == 1:
        return state.held_object()
    first = call.positional[0] if call.positional else None
    if not isinstance(first, Ident):
        return None
    o = state.resolve_object(first.name)
    if o is None and state.obj(first.name) is not None:
        o = state.obj(first.name)
    return o if isinstance(o, ObjectEntity) else None


def history_clauses(state: SceneState, history: Iterable, window: int = 1) -> list[str]:
    """Clauses for the most recent ``window`` executed object manipulations, oldest first.

    ``history`` items are trace steps (anything with ``call`` and ``executed``)
    or bare :class:`PlanCall` values, which count as executed.
    """
    calls = []
    for item in history:
        call = item if isinstance(item, PlanCall) else getattr(item, "call", None)
        executed = True if isinstance(item, PlanCall) else getattr(item, "executed", False)
        if call is not None and executed and call.name in HISTORY_VERBS:
            calls.append(call)
    clauses = []
    for call in calls[-window:] if window > 0 else []:
        o = _history_subject(call, state)
        if o is not None:
            clauses.append(f"you {HISTORY_VERBS[call.name]} the {o.phrase}")
    return clauses


def summarize_state(
    state: SceneState,
    history: Sequence = (),
    flags: AblationFlags | None = None,
    window: int = 1,
) -> StateText:
    flags = flags or AblationFlags()
    clauses = [_watch_clause(state)]
    assessment = detect_need_help(state)
    if not assessment.needs_help:
        clauses.append("people does not need help")
    else:
        clauses.append("people need help")
        human = focus_human(state, assessment)
        if _behind_closed_door(state, human):
            clauses.append("people behind the door")
        elif state.planar_distance(human) > float(state.param("far_threshold")):
            clauses.append("people are far from you")
        condition = human.prop("condition")
        if condition and human.prop("condition_known", False) and not _part_held(state, human):
            clauses.append(f"people need {condition.replace('_', ' ')}")
        status = response_status(state)
        if status == "reply":
            clauses.append("people reply me")
        elif status == "waiting":
            clauses.append("wait people to reply me")
        elif status == "silent":
            clauses.append("you did not receive a response")
    if flags.include_history:
        clauses.extend(history_clauses(state, history, window))
    clauses.append(QUESTION)
    return StateText(tuple(clauses))


# ------------------------------------------------------ clause -> predicates

_FIXED_CLAUSES = {
    "people need help": "help",
    "people does not need help": "no_help",
    "people are far from you": "far",
    "people behind the door": "behind_door",
    "wait people to reply me": "awaiting",
    "people reply me": "reply",
    "you did not receive a response": "no_response",
}
_NEED_RE = re.compile(r"people need (.+)\Z")
_DID_RE = re.compile(r"you (pick|place|hold|release|rotate) the (.+)\Z")
_LABEL_SUFFIX_RE = re.compile(r"_?\d+\Z")


def obstacle_label(symbol: str) -> str:
    """``chair_2`` and ``chair`` both name the chair class in predicates."""
    return _LABEL_SUFFIX_RE.sub("", symbol.strip()) or symbol.strip()


def state_predicates(state_text: StateText | str) -> frozenset:
    """The predicate set a state text encodes; inverse of :func:`summarize_state` on that subset."""
    st = state_text if isinstance(state_text, StateText) else StateText.parse(state_text)
    preds = set()
    watch = st.clauses[0]
    if not (watch.startswith(WATCH_PREFIX) and watch.endswith("]")):
        raise UnknownClause(f"bad watch-out clause {watch!r}")
    for item in watch[len(WATCH_PREFIX) : -1].split(","):
        if item.strip():
            preds.add(f"obstacle:{obstacle_label(item)}")
    if st.clauses[-1] != QUESTION:
        raise UnknownClause(f"state text must end with {QUESTION!r}")
    for clause in st.clauses[1:-1]:
        if clause in _FIXED_CLAUSES:
            preds.add(_FIXED_CLAUSES[clause])
        elif m := _NEED_RE.match(clause):
            preds.add(f"need:{m.group(1)}")
        elif m := _DID_RE.match(clause):
            preds.add(f"did:{m.group(1)} {m.group(2)}")
        else:
            raise UnknownClause(f"unrecognized clause {clause!r}")
    return frozenset(preds)


# -------------------------------------------------------------------- prompts


@lru_cache(maxsize=1)
def alternative_templates() -> tuple:
    text = resources.files("helploop").joinpath("data/templates.txt").read_text(encoding="utf-8")
    return tuple(line for line in text.splitlines() if line.strip())


def prompt_template(index: int) -> str:
    """Template 0 is the default scene question; 1-4 are the bundled alternatives."""
    if index == 0:
        return SCENE_PROMPT
    templates = alternative_templates()
    if not 1 <= index <= len(templates):
        raise UnknownTemplateIndex(f"template index must be 0..{len(templates)}, got {index}")
    return templates[index - 1]


def build_scene_prompt(template_index: int = 0) -> str:
    return prompt_template(template_index)


def build_person_prompt(person_label: str) -> str:
    return PERSON_PROMPT.format(person_label)


def fill_template(index: int, state: SceneState) -> str:
    """An alternative template with the obstacle list and the person's circumstance filled in."""
    template = prompt_template(index)
    obstacles = ", ".join(o.id for o in state.objects if o.prop("is_obstacle", False) and state.known(o))
    assessment = detect_need_help(state)
    human = focus_human(state, assessment)
    if human is None:
        circumstance = "does not need help"
    else:
        condition = human.prop("condition") if human.prop("condition_known", False) else None
        circumstance = condition.replace("_", " ") if condition else "help"
    n = template.count("{}")
    return template.format(*([obstacles, circumstance][:n]))


def generate_task(assessment: HelpAssessment, state: SceneState) -> Task | None:
    if not assessment.needs_help:
        return None
    human = focus_human(state, assessment)
    noun = human.prop("noun") or human.phrase
    if human.prop("conscious", True) is False:
        description = f"Dial {state.param('emergency_number')} and report that the {noun} is unconscious"
    else:
        pronoun = human.prop("pronoun", "they")
        verb = "need" if pronoun == "they" else "needs"
        description = f"Ask the {noun} whether {pronoun} {verb} help"
    return Task(f"task-{human.id}-{state.clock:g}", description, human.id, state.clock)


__all__ = [
    "AGENT",
    "AblationFlags",
    "HelpAssessment",
    "QUESTION",
    "StateText",
    "Task",
    "UnknownClause",
    "UnknownTemplateIndex",
    "build_person_prompt",
    "build_scene_prompt",
    "detect_need_help",
    "fill_template",
    "focus_human",
    "generate_task",
    "history_clauses",
    "obstacle_label",
    "prompt_template",
    "state_predicates",
    "summarize_state",
]

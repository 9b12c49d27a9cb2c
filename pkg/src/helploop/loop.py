"""The closed loop: detect, summarize, plan one sub-task, validate, execute, repeat."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .dsl import PlanCall, PlanSyntaxError, parse_call
from .llm import BackendError
from .perception import AblationFlags, Task, detect_need_help, generate_task, summarize_state
from .planner import NoFunctionLine, NoMatchingExemplar, PlannerBackend, build_prompt, extract_function
from .state import SceneState
from .world import Inadmissible, apply_action

log = logging.getLogger(__name__)

EXECUTED = "Executed"
PARSE_FAILED = "ParseFailed"
INADMISSIBLE = "Inadmissible"
BACKEND_FAILED = "BackendFailed"

STOP = "Stop"
STEP_BUDGET = "StepBudget"
NO_TASK = "NoTask"


@dataclass(frozen=True)
class TraceStep:
    index: int
    state_text: str
    prompt: str | None
    completion: str | None
    action_text: str | None
    call: PlanCall | None
    exec_status: str
    detail: str
    state_after_digest: str
    clock_after: float

    @property
    def executed(self) -> bool:
        return self.exec_status == EXECUTED

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "state_text": self.state_text,
            "prompt": self.prompt,
            "completion": self.completion,
            "action_text": self.action_text,
            "call": str(self.call) if self.call is not None else None,
            "exec_status": self.exec_status,
            "detail": self.detail,
            "state_after_digest": self.state_after_digest,
            "clock_after": self.clock_after,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceStep":
        return cls(
            index=d["index"],
            state_text=d["state_text"],
            prompt=d.get("prompt"),
            completion=d.get("completion"),
            action_text=d.get("action_text"),
            call=parse_call(d["call"]) if d.get("call") is not None else None,
            exec_status=d["exec_status"],
            detail=d.get("detail", ""),
            state_after_digest=d["state_after_digest"],
            clock_after=float(d["clock_after"]),
        )


@dataclass(frozen=True)
class RunConfig:
    step_budget: int = 50
    flags: AblationFlags = AblationFlags()
    seed: int = 0
    # when False, an episode with nobody needing help ends at once with NoTask
    plan_when_idle: bool = True
    history_window: int = 1
    keep_prompts: bool = True

    def __post_init__(self):
        if self.step_budget < 1:
            raise ValueError("step_budget must be at least 1")


@dataclass(frozen=True)
class RunTrace:
    scenario_id: str
    backend_id: str
    flags: AblationFlags
    seed: int
    steps: tuple
    terminated_by: str
    initial_state: SceneState
    final_state: SceneState
    tasks: tuple = ()
    version_warning: bool = field(default=False, compare=False)

    @property
    def digests(self) -> list[str]:
        return [s.state_after_digest for s in self.steps]


def step(
    state: SceneState,
    history: Sequence,
    backend: PlannerBackend,
    flags: AblationFlags | None = None,
    window: int = 1,
    keep_prompt: bool = True,
) -> tuple[TraceStep, SceneState]:
    """One loop traversal. The returned state is the input state unless the step executed."""
    flags = flags or AblationFlags()
    index = len(history)
    state_text = summarize_state(state, history, flags, window)
    prompt = build_prompt(state_text, flags=flags)

    def record(status, detail="", completion=None, action=None, call=None, after=state):
        return TraceStep(
            index, state_text.text, prompt if keep_prompt else None, completion, action, call,
            status, detail, after.digest(), after.clock,
        ), after

    try:
        completion = backend.complete(prompt, state)
    except BackendError as exc:
        return record(BACKEND_FAILED, f"{exc.kind}: {exc}")
    except NoMatchingExemplar as exc:
        return record(BACKEND_FAILED, f"no_matching_exemplar: {exc}")
    except ValueError as exc:
        return record(BACKEND_FAILED, f"bad_state_text: {exc}")
    try:
        action, call = extract_function(completion)
    except (NoFunctionLine, PlanSyntaxError) as exc:
        return record(PARSE_FAILED, str(exc), completion)
    result = apply_action(state, call)
    if isinstance(result, Inadmissible):
        return record(INADMISSIBLE, str(result), completion, action, call)
    return record(EXECUTED, "", completion, action, call, result)


def run_episode(scenario, backend: PlannerBackend, config: RunConfig | None = None) -> RunTrace:
    """Run one free-running episode; every failure is recorded in the trace, never raised."""
    config = config or RunConfig()
    initial = scenario.initial_state
    state = initial
    steps: list[TraceStep] = []
    tasks: list[Task] = []
    terminated_by = STEP_BUDGET
    for i in range(config.step_budget):
        assessment = detect_need_help(state)
        if i == 0 and not assessment.needs_help and not config.plan_when_idle:
            terminated_by = NO_TASK
            break
        task = generate_task(assessment, state)
        if task is not None and (not tasks or tasks[-1].target != task.target):
            tasks.append(task)
        traced, state = step(state, steps, backend, config.flags, config.history_window, config.keep_prompts)
        steps.append(traced)
        if state.terminated:
            terminated_by = STOP
            break
    log.debug("episode %s with %s ended by %s after %d steps", scenario.id, backend.backend_id, terminated_by, len(steps))
    return RunTrace(
        scenario.id, backend.backend_id, config.flags, config.seed, tuple(steps), terminated_by,
        initial, state, tuple(tasks),
    )


@dataclass(frozen=True)
class ForcedStep:
    """A teacher-forced prediction next to the ground truth it is scored against."""

    predicted: TraceStep
    truth_call: PlanCall
    truth_digest: str
    pre_state: SceneState


def run_teacher_forced(scenario, backend: PlannerBackend, config: RunConfig | None = None) -> list[ForcedStep]:
    """Predict each ground-truth sub-task given the ground-truth prefix as history."""
    config = config or RunConfig()
    state = scenario.initial_state
    history: list[PlanCall] = []
    out = []
    for gt in scenario.ground_truth:
        predicted, _ = step(state, history, backend, config.flags, config.history_window, config.keep_prompts)
        truth_call = parse_call(gt.function)
        out.append(ForcedStep(predicted, truth_call, gt.digest, state))
        nxt = apply_action(state, truth_call)
        if isinstance(nxt, Inadmissible):
            raise ValueError(f"ground truth step {gt.function!r} is inadmissible: {nxt}")
        state = nxt
        history.append(truth_call)
    return out

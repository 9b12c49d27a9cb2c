"""SR / Exec / GCR scoring, sample-weighted aggregation and report tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_DOWN, Decimal
from typing import Iterable, Sequence

from .dsl import Ident, PlanCall, Role, default_registry
from .loop import EXECUTED, NO_TASK, STOP, ForcedStep, RunTrace, TraceStep
from .state import AGENT, ObjectEntity, SceneState
from .world import satisfies

COMPLEXITY_ORDER = ("NoHarm", "Easy", "Medium", "Hard")
COMPLEXITY_LABELS = {"NoHarm": "No harm", "Easy": "Easy", "Medium": "Medium", "Hard": "Hard"}
TASK_TYPE_ORDER = (
    "ask_if_help",
    "move_to_human",
    "wait",
    "receive",
    "hold_arm",
    "release_arm",
    "pick_chair",
    "place_chair",
    "open_door",
    "call_emergency",
    "stop",
)
TASK_TYPE_LABELS = {
    "ask_if_help": "Ask if help needed",
    "move_to_human": "Move to the human",
    "wait": "Wait human response",
    "receive": "Receive human response",
    "hold_arm": "Hold the human's arm",
    "release_arm": "Release the human's arm",
    "pick_chair": "Pick up chair",
    "place_chair": "Place chair",
    "open_door": "Open the door",
    "call_emergency": "Call emergency number",
    "stop": "Stop",
}


class MismatchedScenario(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class MetricsTriple:
    sr: float
    exec: float
    gcr: float

    def __post_init__(self):
        if self.sr == 1 and self.gcr != 1:
            raise ValueError("sr = 1 requires gcr = 1")

    def __str__(self) -> str:
        return f"SR={fmt4(self.sr)} Exec={fmt4(self.exec)} GCR={fmt4(self.gcr)}"


@dataclass(frozen=True)
class MetricsRow:
    label: str
    num: int
    sr: float
    exec: float
    gcr: float

    def __post_init__(self):
        if self.num < 1:
            raise ValueError("a metrics row needs at least one sample")


def score_run(trace: RunTrace, scenario) -> MetricsTriple:
    if trace.scenario_id != scenario.id:
        raise MismatchedScenario(f"trace is for {trace.scenario_id!r}, not {scenario.id!r}")
    if trace.terminated_by == NO_TASK:
        correct = scenario.complexity == "NoHarm"
        return MetricsTriple(1.0, 1.0, 1.0) if correct else MetricsTriple(0.0, 0.0, 0.0)
    steps = trace.steps
    if scenario.complexity == "NoHarm":
        # a single decision: stopping at once is right, anything else offers unwanted help
        first = steps[0] if steps else None
        correct = (
            first is not None
            and first.exec_status == EXECUTED
            and first.call.name == "stop"
            and all(satisfies(trace.final_state, g) for g in scenario.goals)
        )
        return MetricsTriple(1.0, 1.0, 1.0) if correct else MetricsTriple(0.0, 0.0, 0.0)
    exec_ = sum(s.exec_status == EXECUTED for s in steps) / len(steps) if steps else 0.0
    goals = scenario.goals
    gcr = sum(satisfies(trace.final_state, g) for g in goals) / len(goals) if goals else 1.0
    sr = 1.0 if gcr == 1.0 and trace.terminated_by == STOP else 0.0
    return MetricsTriple(sr, exec_, gcr)


def _object_args(call: PlanCall, state: SceneState | None) -> tuple:
    sig = default_registry().get(call.name)
    form = sig.form_for(len(call.positional)) if sig else None
    out = []
    for i, arg in enumerate(call.positional):
        if form is None or form[i] is not Role.OBJECT:
            continue
        name = arg.name if isinstance(arg, Ident) else str(arg)
        if state is not None and isinstance(arg, Ident):
            bound = state.resolve_object(name)
            name = bound.id if isinstance(bound, ObjectEntity) else (AGENT if bound == AGENT else name)
        out.append(name.lower())
    return tuple(out)


def score_subtask(step: TraceStep, truth_call: PlanCall, truth_digest: str, pre_state: SceneState | None = None) -> MetricsTriple:
    """Teacher-forced score: name plus grounded object arguments, then post-state agreement."""
    exec_ = 1.0 if step.exec_status == EXECUTED else 0.0
    call = step.call
    match = (
        call is not None
        and call.name == truth_call.name
        and _object_args(call, pre_state) == _object_args(truth_call, pre_state)
    )
    gcr = 1.0 if match else 0.0
    sr = 1.0 if match and step.exec_status == EXECUTED and step.state_after_digest == truth_digest else 0.0
    return MetricsTriple(sr, exec_, gcr)


def score_forced(forced: ForcedStep) -> MetricsTriple:
    return score_subtask(forced.predicted, forced.truth_call, forced.truth_digest, forced.pre_state)


def aggregate(rows: Sequence[MetricsRow], label: str = "Total") -> MetricsRow:
    rows = list(rows)
    if not rows:
        raise EmptyInput("cannot aggregate zero rows")
    num = sum(r.num for r in rows)
    return MetricsRow(
        label,
        num,
        sum(r.num * r.sr for r in rows) / num,
        sum(r.num * r.exec for r in rows) / num,
        sum(r.num * r.gcr for r in rows) / num,
    )


def rows_from_scores(scored: Iterable[tuple[str, MetricsTriple]], order: Sequence[str] = ()) -> list[MetricsRow]:
    """Mean triple per category, categories in ``order`` first, then any others alphabetically."""
    buckets: dict[str, list[MetricsTriple]] = {}
    for key, triple in scored:
        buckets.setdefault(key, []).append(triple)
    keys = [k for k in order if k in buckets] + sorted(k for k in buckets if k not in order)
    rows = []
    for k in keys:
        ts = buckets[k]
        n = len(ts)
        rows.append(MetricsRow(k, n, sum(t.sr for t in ts) / n, sum(t.exec for t in ts) / n, sum(t.gcr for t in ts) / n))
    return rows


def fmt4(value: float) -> str:
    """Four decimals, truncated; float noise below 1e-9 is snapped away first."""
    return str(Decimal(repr(round(value, 9))).quantize(Decimal("0.0001"), rounding=ROUND_DOWN))


def format_row(row: MetricsRow) -> str:
    return f"{row.label:<24} {row.num:>6} {fmt4(row.sr)} {fmt4(row.exec)} {fmt4(row.gcr)}"


def report(rows: Sequence[MetricsRow], group_by: str = "complexity", labels: dict | None = None) -> str:
    """Table text: one row per non-empty category in declared order, then Total."""
    order = COMPLEXITY_ORDER if group_by == "complexity" else TASK_TYPE_ORDER
    labels = labels if labels is not None else (COMPLEXITY_LABELS if group_by == "complexity" else TASK_TYPE_LABELS)
    rank = {k: i for i, k in enumerate(order)}
    kept = sorted((r for r in rows if r.num > 0), key=lambda r: (rank.get(r.label, len(rank)), r.label))
    head = "Complexity" if group_by == "complexity" else "Task Description"
    lines = [f"{head:<24} {'Num':>6} {'SR':<6} {'Exec':<6} {'GCR':<6}".rstrip()]
    for r in kept:
        lines.append(format_row(MetricsRow(labels.get(r.label, r.label), r.num, r.sr, r.exec, r.gcr)))
    lines.append(format_row(aggregate(kept)))
    return "\n".join(lines) + "\n"


def rows_to_csv(rows: Sequence[MetricsRow], with_total: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "num", "sr", "exec", "gcr"])
    out = list(rows) + ([aggregate(rows)] if with_total and rows else [])
    for r in out:
        writer.writerow([r.label, r.num, fmt4(r.sr), fmt4(r.exec), fmt4(r.gcr)])
    return buf.getvalue()


def task_type(call: PlanCall, state: SceneState | None = None) -> str:
    """Sub-task category of a ground-truth call."""
    name = call.name
    subject = None
    if call.positional and isinstance(call.positional[0], Ident) and state is not None:
        bound = state.resolve_object(call.positional[0].name)
        subject = bound if isinstance(bound, ObjectEntity) else None
    cls = subject.cls.lower() if subject is not None else (call.positional[0].name.lower() if call.positional and isinstance(call.positional[0], Ident) else "")
    if name == "say":
        return "ask_if_help"
    if name in ("move", "move_base"):
        return "move_to_human"
    if name == "wait":
        return "wait"
    if name == "receive_info":
        return "receive"
    if name == "phone_dial":
        return "call_emergency"
    if name == "stop":
        return "stop"
    if name in ("hold", "release") and (cls in ("arm", "human") or (subject is not None and subject.prop("part_of") and cls != "handle")):
        return f"{name}_arm"
    if name == "pick" and cls == "chair":
        return "pick_chair"
    if name == "place" and cls == "chair":
        return "place_chair"
    if name in ("hold", "rotation", "release") and cls == "handle":
        return "open_door"
    return name

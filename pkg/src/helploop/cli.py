"""Command-line entry point: parse, run, eval, replay, prompt."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .dsl import PlanSyntaxError, default_registry, parse_call, parse_program, validate
from .llm import LLMBackend, LLMConfig
from .loop import EXECUTED, RunConfig, run_episode, run_teacher_forced
from .metrics import (
    COMPLEXITY_ORDER,
    TASK_TYPE_ORDER,
    rows_from_scores,
    rows_to_csv,
    report,
    score_forced,
    score_run,
    task_type,
)
from .perception import AblationFlags, UnknownTemplateIndex, fill_template, summarize_state
from .planner import RandomBackend, ScriptedBackend, build_prompt
from .scenarios import (
    DigestMismatch,
    IoError,
    ReplayError,
    SchemaError,
    atomic_write_text,
    corpus_dir,
    find_scenario,
    load_corpus,
    load_trace,
    save_trace,
)
from .world import Inadmissible, apply_action

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_INVALID = 3

log = logging.getLogger("helploop")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-action", action="store_true", help="omit action lines from the planner prompt")
    p.add_argument("--no-history", action="store_true", help="omit history clauses from the state text")


def _add_backend(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("scripted", "random", "llm"), default="scripted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step-budget", type=int, default=50)
    p.add_argument("--endpoint", help="chat-completion URL (default from HELPLOOP_LLM_ENDPOINT)")
    p.add_argument("--model", help="model name (default from HELPLOOP_LLM_MODEL)")
    p.add_argument("--timeout", type=float, help="request timeout in seconds")
    p.add_argument("--retries", type=int, help="retries after a failed request")
    p.add_argument("--temperature", type=float)
    _add_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="helploop", description="Closed-loop helping-robot planner simulator and evaluation harness.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="parse and validate a plan program (one call per line)")
    p.add_argument("file")

    p = sub.add_parser("run", help="run one episode and write its trace")
    p.add_argument("scenario", help="scenario file or bundled scenario id")
    p.add_argument("--trace", help="trace output path (default <scenario id>.trace.jsonl)")
    _add_backend(p)

    p = sub.add_parser("eval", help="evaluate a corpus and print a report table")
    p.add_argument("corpus", nargs="?", help="directory of scenario files (default: bundled corpus)")
    p.add_argument("--group-by", choices=("complexity", "task_type"), default="complexity")
    p.add_argument("--episodes-per-scenario", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--csv", help="write the report rows as CSV")
    p.add_argument("--trace-dir", help="write one trace file per episode here")
    _add_backend(p)

    p = sub.add_parser("replay", help="re-execute a trace and verify its state digests")
    p.add_argument("trace")

    p = sub.add_parser("prompt", help="print the planner prompt for a scenario state")
    p.add_argument("scenario", help="scenario file or bundled scenario id")
    p.add_argument("--step", type=int, default=0, help="state after this many ground-truth steps")
    p.add_argument("--template", type=int, default=0, help="0: planner prompt; 1-4: alternative task-generation template")
    _add_flags(p)
    return parser


def _flags(args) -> AblationFlags:
    return AblationFlags(include_action=not args.no_action, include_history=not args.no_history)


def _make_backend(args, seed: int):
    if args.backend == "scripted":
        return ScriptedBackend()
    if args.backend == "random":
        return RandomBackend(seed)
    cfg = LLMConfig.from_env(
        endpoint=args.endpoint, model=args.model, timeout=args.timeout, retries=args.retries, temperature=args.temperature
    )
    return LLMBackend(cfg)


def _run_config(args, seed: int) -> RunConfig:
    if args.step_budget < 1:
        raise UsageError("--step-budget must be at least 1")
    return RunConfig(step_budget=args.step_budget, flags=_flags(args), seed=seed)


def cmd_parse(args) -> int:
    try:
        text = Path(args.file).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    try:
        calls = parse_program(text)
    except PlanSyntaxError as exc:
        print(f"{args.file}:{exc.lineno}:{exc.offset + 1}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    registry = default_registry()
    bad = 0
    for call in calls:
        for v in validate(call, registry):
            bad += 1
            print(f"{args.file}:{call.line}: {v.kind}: {v.detail}", file=sys.stderr)
    if bad:
        return EXIT_INVALID
    for call in calls:
        print(call)
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = find_scenario(args.scenario)
    trace = run_episode(scenario, _make_backend(args, args.seed), _run_config(args, args.seed))
    save_trace(trace, args.trace or f"{scenario.id}.trace.jsonl")
    triple = score_run(trace, scenario)
    print(f"{scenario.id} {trace.backend_id} steps={len(trace.steps)} terminated_by={trace.terminated_by} {triple}")
    return EXIT_OK


def _episodes(scenarios, args):
    return [(s, args.seed + e) for s in scenarios for e in range(args.episodes_per_scenario)]


def cmd_eval(args) -> int:
    if args.episodes_per_scenario < 1 or args.jobs < 1:
        raise UsageError("--episodes-per-scenario and --jobs must be at least 1")
    scenarios = load_corpus(args.corpus or corpus_dir())
    if not scenarios:
        raise IoError(f"no scenario files in {args.corpus}")
    jobs = sorted(_episodes(scenarios, args), key=lambda j: (j[0].id, j[1]))

    if args.group_by == "complexity":
        def work(job):
            scenario, seed = job
            trace = run_episode(scenario, _make_backend(args, seed), _run_config(args, seed))
            return scenario, seed, trace, [(scenario.complexity, score_run(trace, scenario))]
        order = COMPLEXITY_ORDER
    else:
        def work(job):
            scenario, seed = job
            forced = run_teacher_forced(scenario, _make_backend(args, seed), _run_config(args, seed))
            pre = [f.pre_state for f in forced]
            types = scenario.task_types or [task_type(f.truth_call, p) for f, p in zip(forced, pre)]
            return scenario, seed, None, [(t, score_forced(f)) for t, f in zip(types, forced)]
        order = TASK_TYPE_ORDER

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(work, jobs))  # map preserves the sorted job order

    scored = [pair for _, _, _, pairs in results for pair in pairs]
    rows = rows_from_scores(scored, order)
    sys.stdout.write(report(rows, args.group_by))
    if args.csv:
        atomic_write_text(args.csv, rows_to_csv(rows))
    if args.trace_dir:
        for scenario, seed, trace, _ in results:
            if trace is not None:
                save_trace(trace, Path(args.trace_dir) / f"{scenario.id}.{args.backend}.{seed}.jsonl")
    return EXIT_OK


def cmd_replay(args) -> int:
    trace = load_trace(args.trace)
    state = trace.initial_state
    for s in trace.steps:
        if s.exec_status == EXECUTED:
            nxt = apply_action(state, s.call)
            if isinstance(nxt, Inadmissible):
                print(f"step {s.index}: recorded as executed but now {nxt}", file=sys.stderr)
                return EXIT_INVALID
            state = nxt
        if state.digest() != s.state_after_digest:
            print(f"step {s.index}: state digest diverges from the trace", file=sys.stderr)
            return EXIT_INVALID
    if state.digest() != trace.final_state.digest():
        print("final state diverges from the trace", file=sys.stderr)
        return EXIT_INVALID
    print(f"replay ok: {trace.scenario_id} {len(trace.steps)} steps, terminated_by={trace.terminated_by}")
    return EXIT_OK


def cmd_prompt(args) -> int:
    scenario = find_scenario(args.scenario)
    if not 0 <= args.step <= len(scenario.ground_truth):
        raise UsageError(f"--step must be between 0 and {len(scenario.ground_truth)}")
    state = scenario.initial_state
    history = []
    for gt in scenario.ground_truth[: args.step]:
        call = parse_call(gt.function)
        state = apply_action(state, call)
        history.append(call)
    if args.template:
        try:
            text = fill_template(args.template, state)
        except UnknownTemplateIndex as exc:
            raise UsageError(str(exc)) from exc
        sys.stdout.write(text + "\n")
        return EXIT_OK
    flags = _flags(args)
    sys.stdout.write(build_prompt(summarize_state(state, history, flags), flags=flags))
    return EXIT_OK


COMMANDS = {"parse": cmd_parse, "run": cmd_run, "eval": cmd_eval, "replay": cmd_replay, "prompt": cmd_prompt}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"helploop: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IoError, SchemaError) as exc:
        print(f"helploop: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DigestMismatch, ReplayError) as exc:
        print(f"helploop: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

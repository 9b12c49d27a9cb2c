import json
import os
import shutil
from pathlib import Path

import pytest

from helploop.loop import RunConfig, run_episode
from helploop.metrics import MetricsTriple, score_run
from helploop.planner import RandomBackend, ScriptedBackend
from helploop.scenarios import (
    DigestMismatch,
    IoError,
    ReplayError,
    SchemaError,
    atomic_write_text,
    corpus_dir,
    load_scenario,
    load_trace,
    replay_ground_truth,
    save_scenario,
    save_trace,
    scenario_from_dict,
    scenario_json,
)
from helploop.dsl import parse_call
from helploop.world import Inadmissible, Reason, apply_action, satisfies

FIXTURES = Path(__file__).parent / "fixtures"


def raw(name):
    return json.loads((corpus_dir() / f"{name}.json").read_text(encoding="utf-8"))


def test_load_bundled_fixture():
    s = load_scenario(corpus_dir() / "stand_up_easy.json")
    assert s.id == "stand_up_easy" and s.complexity == "Easy"
    assert s.goals and s.ground_truth


def test_unknown_complexity():
    d = raw("stand_up_easy")
    d["complexity"] = "Trivial"
    with pytest.raises(SchemaError) as exc:
        scenario_from_dict(d)
    assert exc.value.field == "/complexity"


def test_schema_version_required():
    d = raw("stand_up_easy")
    d["schema"] = 2
    with pytest.raises(SchemaError):
        scenario_from_dict(d)


def test_ground_truth_absent_object():
    d = raw("stand_up_easy")
    d["ground_truth"].insert(0, {"function": "pick(teapot, teapot_pose, agent)"})
    with pytest.raises(ReplayError):
        scenario_from_dict(d)


def test_goal_reference_must_resolve():
    d = raw("stand_up_easy")
    d["goals"].append({"type": "held", "object": "teapot"})
    with pytest.raises(SchemaError):
        scenario_from_dict(d)


def test_stale_digest_rejected():
    d = raw("stand_up_easy")
    d["ground_truth"][0]["digest"] = "0" * 64
    with pytest.raises(ReplayError):
        scenario_from_dict(d)
    assert scenario_from_dict(d, verify=False).id == "stand_up_easy"


def test_bad_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": 1,\n  "id": }', encoding="utf-8")
    with pytest.raises(SchemaError) as exc:
        load_scenario(bad)
    assert "line 2" in str(exc.value)
    with pytest.raises(IoError):
        load_scenario(tmp_path / "missing.json")


def chair_blocks_approach(scenario):
    """True if the arm cannot be reached until the chair has been picked up and moved."""
    functions = [g.function for g in scenario.ground_truth]
    if not any(f.startswith("pick(chair") for f in functions):
        return False
    state = scenario.initial_state
    for f in functions:
        if f.startswith(("pick(chair", "place(chair")):
            continue
        result = apply_action(state, parse_call(f))
        if isinstance(result, Inadmissible):
            return f.startswith("hold(") and result.reason is Reason.COLLISION_BLOCKED
        state = result
    return False


def test_corpus_coverage(corpus):
    assert len(corpus) >= 12
    by_class = {}
    for s in corpus:
        by_class.setdefault(s.complexity, []).append(s)
    assert all(len(by_class.get(c, [])) >= 2 for c in ("NoHarm", "Easy", "Medium", "Hard"))
    types = {t for s in corpus for t in s.task_types}
    assert {"ask_if_help", "move_to_human", "wait", "receive", "hold_arm", "release_arm", "pick_chair", "call_emergency"} <= types
    audible = [
        s for s in corpus if s.complexity == "Hard" and any(
            o.is_human and not o.prop("in_sight", True) and o.prop("audible_distress") for o in s.initial_state.objects)
    ]
    assert audible
    assert any(chair_blocks_approach(s) for s in corpus)
    assert any(s.ground_truth and s.ground_truth[0].function == "stop()" for s in by_class["NoHarm"])


def test_ground_truth_replays_to_goals(corpus):
    for s in corpus:
        final = replay_ground_truth(s)[-1]
        assert all(satisfies(final, g) for g in s.goals), s.id


def test_every_scenario_scripted_success(corpus):
    for s in corpus:
        assert score_run(run_episode(s, ScriptedBackend()), s) == MetricsTriple(1.0, 1.0, 1.0), s.id


def test_canonical_serialization(corpus, tmp_path):
    for s in corpus:
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_scenario(s, a)
        save_scenario(load_scenario(a), b)
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() == (corpus_dir() / f"{s.id}.json").read_bytes()
        assert scenario_json(s) == scenario_json(s)


def test_trace_round_trip(corpus, tmp_path):
    for i, s in enumerate(corpus):
        for backend in (ScriptedBackend(), RandomBackend(i)):
            trace = run_episode(s, backend, RunConfig(step_budget=20))
            path = tmp_path / f"{s.id}.jsonl"
            save_trace(trace, path)
            assert load_trace(path) == trace


def test_corrupted_trace_byte(scenarios, tmp_path):
    path = tmp_path / "t.jsonl"
    save_trace(run_episode(scenarios["stand_up_easy"], ScriptedBackend()), path)
    data = bytearray(path.read_bytes())
    lines = data.split(b"\n")
    target = lines[2]
    at = target.index(b'"clock_after":') + len(b'"clock_after":')
    target[at:at + 1] = b"9" if target[at:at + 1] != b"9" else b"8"
    path.write_bytes(b"\n".join(lines))
    with pytest.raises(DigestMismatch):
        load_trace(path)


def test_version_mismatch_warns():
    with pytest.warns(UserWarning):
        trace = load_trace(FIXTURES / "no_harm_sitting.v0.trace.jsonl")
    assert trace.version_warning and trace.scenario_id == "no_harm_sitting"


def test_atomic_write_leaves_no_partial(tmp_path, monkeypatch):
    path = tmp_path / "out.txt"
    atomic_write_text(path, "first\n")

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(IoError):
        atomic_write_text(path, "second\n")
    assert path.read_text() == "first\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]


def test_refresh_tool_is_idempotent(tmp_path):
    from helploop.scenarios import main

    src = corpus_dir() / "door_hard.json"
    dst = tmp_path / "door_hard.json"
    shutil.copy(src, dst)
    assert main(["refresh", str(dst)]) == 0
    assert dst.read_bytes() == src.read_bytes()

import collections
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helploop.dsl import PlanSyntaxError, default_registry, parse_call, validate
from helploop.perception import AblationFlags, summarize_state
from helploop.planner import (
    NoFunctionLine,
    NoMatchingExemplar,
    RandomBackend,
    ScriptedBackend,
    build_prompt,
    default_exemplars,
    extract_function,
    format_completion,
    match_exemplar,
    next_step_scripted,
    random_baseline,
)
from helploop.scenarios import replay_ground_truth
from test_dsl import calls

FIXTURE = Path(__file__).parent / "fixtures" / "golden_prompt.txt"
HELP = "you need to watch out []; people need help; what should you do next?"


def golden(body: str) -> str:
    return FIXTURE.read_text(encoding="utf-8").replace("{}", body)


def test_golden_prompt_byte_equal():
    assert build_prompt(HELP) == golden("you need to watch out []; people need help;")
    far = "you need to watch out [chair, ]; people need help; people are far from you; what should you do next?"
    assert build_prompt(far) == golden("you need to watch out [chair, ]; people need help; people are far from you;")


def test_prompt_ends_with_question():
    assert build_prompt(HELP).rstrip("\n").splitlines()[-1] == 'state: "you need to watch out []; people need help; what should you do next?"'


def test_no_action_prompt():
    full = build_prompt(HELP).splitlines()
    lean = build_prompt(HELP, flags=AblationFlags(include_action=False)).splitlines()
    assert not any(line.startswith("action") for line in lean)
    assert any(line.startswith("action") for line in full)
    it = iter(full)
    assert all(any(line == f for f in it) for line in lean)
    assert len(lean) < len(full)


def test_single_exemplar_prompt():
    ex = default_exemplars()[0]
    prompt = build_prompt(HELP, [ex])
    body = prompt.split("Question:")[0]
    # the blank format template plus the one exemplar
    assert body.count("state:") == 2 and body.count(ex.function_text) == 1
    with pytest.raises(ValueError):
        build_prompt(HELP, [])


def test_bundled_exemplars_match_fixture_blocks():
    exemplars = default_exemplars()
    text = FIXTURE.read_text(encoding="utf-8")
    for e in exemplars:
        assert f'"{e.function_text}"' in text
        e.call  # parses
    assert len(exemplars) == sum(1 for line in text.splitlines() if line.startswith("function") and '""' not in line)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["people are far from you", "people need stand up", "wait people to reply me",
                                  "you pick the chair", "people behind the door"]), unique=True),
       st.lists(st.sampled_from(["people are far from you", "people need stand up", "people reply me",
                                  "you hold the arm"]), unique=True))
def test_build_prompt_injective(a, b):
    ta = "; ".join(["you need to watch out []", "people need help", *a, "what should you do next?"])
    tb = "; ".join(["you need to watch out []", "people need help", *b, "what should you do next?"])
    assert (build_prompt(ta) == build_prompt(tb)) == (ta == tb)


def test_extract_examples():
    action, call = extract_function('action: "stop"\nfunction: "stop()"')
    assert action == "stop" and call == parse_call("stop()")
    with pytest.raises(NoFunctionLine):
        extract_function("I think the robot should help the person.")
    action, call = extract_function('action: "wait"\nfunction: "wait(second)"\nfunction: "stop()"')
    assert call == parse_call("wait(second)")
    assert extract_function('function: "pick(chair, chair_pose, agent)"') == (None, parse_call("pick(chair, chair_pose, agent)"))
    with pytest.raises(PlanSyntaxError):
        extract_function('function: "pick(chair,"')


@settings(max_examples=300, deadline=None)
@given(calls(), st.one_of(st.none(), st.text(alphabet="abcdefghij klm", max_size=20)))
def test_format_extract_identity(call, action):
    got_action, got_call = extract_function(format_completion(action, call))
    assert got_call == call
    if action is not None:
        assert got_action == action.strip()


def test_scripted_examples():
    assert next_step_scripted("you need to watch out []; people need help; people are far from you; what should you do next?") == (
        "move to the people", parse_call("move_base(human_position)"))
    assert next_step_scripted("you need to watch out []; people does not need help; what should you do next?") == (
        "stop", parse_call("stop()"))
    assert next_step_scripted(
        "you need to watch out [chair, ]; people need help; people need stand up; what should you do next?"
    ) == ("remove the chair", parse_call("pick(chair, chair_pose, agent)"))


def test_scripted_closure():
    exemplars = default_exemplars()
    for e in exemplars:
        assert match_exemplar(e.predicates, exemplars) is e
        assert next_step_scripted(e.state_text)[1] == e.call


def test_no_matching_exemplar():
    only_stop = [e for e in default_exemplars() if e.function_text == "stop()"]
    with pytest.raises(NoMatchingExemplar):
        match_exemplar(frozenset({"help"}), only_stop)


def test_scripted_grounding_resolves_in_scene(corpus):
    registry = default_registry()
    backend = ScriptedBackend()
    for scenario in corpus:
        states = replay_ground_truth(scenario)
        for state in states[:-1]:
            text = summarize_state(state)
            try:
                _, call = extract_function(backend.complete(build_prompt(text), state))
            except NoMatchingExemplar:
                continue
            assert validate(call, registry, state) == [], (scenario.id, str(call))


def test_random_determinism_and_validity(scenarios):
    state = scenarios["stand_up_easy"].initial_state
    first, second = random_baseline(42), RandomBackend(42)
    assert [first.draw(state) for _ in range(50)] == [second.draw(state) for _ in range(50)]
    names = set(default_registry().names())
    for _ in range(200):
        call = parse_call(str(first.draw(state)))
        assert call.name in names


def test_random_draws_identical_across_processes():
    code = "from helploop.planner import RandomBackend; b = RandomBackend(42); print(b.draw(), b.draw())"
    outs = {subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout for _ in range(2)}
    assert len(outs) == 1


def test_random_function_frequencies():
    backend = RandomBackend(7)
    counts = collections.Counter(backend.draw().name for _ in range(13000))
    assert set(counts) == set(default_registry().names())
    for name, n in counts.items():
        assert abs(n / 13000 - 1 / 13) <= 0.01, (name, n)

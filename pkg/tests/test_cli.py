import csv
import io
import subprocess
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

import pytest

from helploop.cli import main
from helploop.loop import RunConfig, run_episode
from helploop.metrics import COMPLEXITY_LABELS, score_run
from helploop.planner import RandomBackend
from helploop.scenarios import save_trace

FIXTURE = Path(__file__).parent / "fixtures" / "golden_prompt.txt"


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_good(tmp_path, capsys):
    f = tmp_path / "plan.txt"
    f.write_text('say(human, "Do you need help?")\n\n  wait(second)\nstop()\n', encoding="utf-8")
    code, out, _ = run_cli(capsys, "parse", str(f))
    assert code == 0
    assert out.splitlines() == ['say(human, "Do you need help?")', "wait(second)", "stop()"]


def test_parse_syntax_error(tmp_path, capsys):
    f = tmp_path / "plan.txt"
    f.write_text("stop()\npick(chair, chair_pose,\n", encoding="utf-8")
    code, _, err = run_cli(capsys, "parse", str(f))
    assert code == 3
    assert err.startswith(f"{f}:2:")


def test_parse_validation_error(tmp_path, capsys):
    f = tmp_path / "plan.txt"
    f.write_text("fly(agent)\nwait(1, 2)\n", encoding="utf-8")
    code, _, err = run_cli(capsys, "parse", str(f))
    assert code == 3 and f"{f}:1:" in err and f"{f}:2:" in err


def test_usage_and_io_errors(tmp_path, capsys):
    assert run_cli(capsys, "frobnicate")[0] == 1
    assert run_cli(capsys)[0] == 1
    assert run_cli(capsys, "eval", "--group-by", "colour")[0] == 1
    assert run_cli(capsys, "run", "stand_up_easy", "--step-budget", "0", "--trace", str(tmp_path / "t"))[0] == 1
    assert run_cli(capsys, "parse", str(tmp_path / "missing.txt"))[0] == 2
    assert run_cli(capsys, "run", str(tmp_path / "missing.json"))[0] == 2
    assert run_cli(capsys, "replay", str(tmp_path / "missing.jsonl"))[0] == 2
    assert run_cli(capsys, "prompt", "stand_up_easy", "--template", "9")[0] == 1
    assert run_cli(capsys, "prompt", "stand_up_easy", "--step", "99")[0] == 1


def test_run_and_replay(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    code, out, _ = run_cli(capsys, "run", "stand_up_easy", "--trace", str(trace))
    assert code == 0
    assert out.strip() == "stand_up_easy scripted steps=8 terminated_by=Stop SR=1.0000 Exec=1.0000 GCR=1.0000"
    code, out, _ = run_cli(capsys, "replay", str(trace))
    assert code == 0 and out.startswith("replay ok")


def test_replay_random_trace(tmp_path, capsys):
    trace = tmp_path / "r.jsonl"
    assert run_cli(capsys, "run", "door_hard", "--backend", "random", "--seed", "5", "--trace", str(trace))[0] == 0
    assert run_cli(capsys, "replay", str(trace))[0] == 0


def test_replay_divergence(tmp_path, scenarios, capsys):
    trace = run_episode(scenarios["stand_up_easy"], RandomBackend(3), RunConfig(step_budget=4))
    # record a different initial state than the one the steps were produced from
    other = scenarios["door_hard"].initial_state
    tampered = replace(trace, initial_state=other)
    path = tmp_path / "bad.jsonl"
    save_trace(tampered, path)
    code, _, err = run_cli(capsys, "replay", str(path))
    assert code == 3 and "diverges" in err


def test_replay_corrupted(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    run_cli(capsys, "run", "stand_up_easy", "--trace", str(trace))
    text = trace.read_text().replace('"say"', '"sax"', 1).replace("say(", "sax(", 1)
    trace.write_text(text)
    assert run_cli(capsys, "replay", str(trace))[0] == 3


def test_eval_complexity_scripted(capsys, corpus):
    code, out, _ = run_cli(capsys, "eval")
    assert code == 0
    counts = Counter(s.complexity for s in corpus)
    expected = ["Complexity                  Num SR     Exec   GCR"]
    for key in ("NoHarm", "Easy", "Medium", "Hard"):
        expected.append(f"{COMPLEXITY_LABELS[key]:<24} {counts[key]:>6} 1.0000 1.0000 1.0000")
    expected.append(f"{'Total':<24} {len(corpus):>6} 1.0000 1.0000 1.0000")
    assert out.splitlines() == expected
    assert out == (FIXTURE.parent / "eval_complexity_scripted.txt").read_text(encoding="utf-8")


def test_eval_random_matches_direct_scoring(capsys, corpus, tmp_path):
    csv_path = tmp_path / "r.csv"
    code, out, _ = run_cli(capsys, "eval", "--backend", "random", "--seed", "100", "--episodes-per-scenario", "3",
                           "--jobs", "4", "--csv", str(csv_path), "--trace-dir", str(tmp_path / "traces"))
    assert code == 0
    sums = {}
    for s in corpus:
        for e in range(3):
            t = score_run(run_episode(s, RandomBackend(100 + e), RunConfig(seed=100 + e)), s)
            acc = sums.setdefault(COMPLEXITY_LABELS[s.complexity], [0, 0.0, 0.0, 0.0])
            acc[0] += 1
            acc[1] += t.sr
            acc[2] += t.exec
            acc[3] += t.gcr
    rows = {r["label"]: r for r in csv.DictReader(io.StringIO(csv_path.read_text()))}
    for key in ("NoHarm", "Easy", "Medium", "Hard"):
        n, sr, ex, gcr = sums[COMPLEXITY_LABELS[key]]
        row = rows[key]
        assert int(row["num"]) == n
        assert float(row["sr"]) == pytest.approx(sr / n, abs=1e-4)
        assert float(row["exec"]) == pytest.approx(ex / n, abs=1e-4)
        assert float(row["gcr"]) == pytest.approx(gcr / n, abs=1e-4)
    assert out.splitlines()[-1].startswith("Total")
    assert len(list((tmp_path / "traces").iterdir())) == 3 * len(corpus)


def test_eval_jobs_do_not_change_output(capsys):
    a = run_cli(capsys, "eval", "--backend", "random", "--episodes-per-scenario", "2", "--jobs", "1")[1]
    b = run_cli(capsys, "eval", "--backend", "random", "--episodes-per-scenario", "2", "--jobs", "8")[1]
    assert a == b


def test_eval_task_type(capsys):
    code, out, _ = run_cli(capsys, "eval", "--group-by", "task_type")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("Task Description")
    labels = [l[:24].strip() for l in lines[1:]]
    for label in ("Ask if help needed", "Move to the human", "Wait human response", "Receive human response",
                  "Hold the human's arm", "Release the human's arm", "Pick up chair", "Total"):
        assert label in labels
    assert all(l.endswith("1.0000 1.0000 1.0000") for l in lines[1:])


def test_eval_missing_corpus(tmp_path, capsys):
    assert run_cli(capsys, "eval", str(tmp_path / "nope"))[0] == 2
    assert run_cli(capsys, "eval", str(tmp_path))[0] == 2


def test_prompt_golden(capsys):
    code, out, _ = run_cli(capsys, "prompt", "stand_up_easy")
    assert code == 0
    assert out == FIXTURE.read_text(encoding="utf-8").replace("{}", "you need to watch out []; people need help;")


def test_prompt_no_action(capsys):
    out = run_cli(capsys, "prompt", "stand_up_easy", "--no-action")[1]
    assert not any(line.startswith("action") for line in out.splitlines())


def test_prompt_no_history(capsys, scenarios):
    steps = [g.function for g in scenarios["chair_stand_up_medium"].ground_truth].index("place(chair, target_pose, agent)")
    full = run_cli(capsys, "prompt", "chair_stand_up_medium", "--step", str(steps))[1].splitlines()[-1]
    lean = run_cli(capsys, "prompt", "chair_stand_up_medium", "--step", str(steps), "--no-history")[1].splitlines()[-1]
    assert "you pick the chair" in full
    assert lean == full.replace(" you pick the chair;", "")


def test_prompt_alternative_template(capsys):
    code, out, _ = run_cli(capsys, "prompt", "chair_stand_up_medium", "--template", "2")
    assert code == 0 and out.startswith("the obstacle includes chair, the current circumstance is")


def test_console_script_entry_point(tmp_path):
    result = subprocess.run([sys.executable, "-m", "helploop", "--version"], capture_output=True, text=True)
    assert result.returncode == 0 and result.stdout.startswith("helploop ")

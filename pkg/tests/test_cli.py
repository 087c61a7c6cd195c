import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from eventqa.cli import RunReport, build_report, main

FIXTURES = Path(__file__).parent / "fixtures"
SCENES = ["head_on", "late_entry", "chain", "lanes", "entry_hit"]


def test_simulate_count_and_reproducible(tmp_path):
    assert main(["simulate", "--count", "1", "--seed", "4", "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--count", "1", "--seed", "4", "--out", str(tmp_path / "b")]) == 0
    a = sorted((tmp_path / "a").iterdir())
    assert [p.name for p in a] == ["scene_00000.trace.json", "scene_00000.truth.json"]
    for p in a:
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_refuses_overwrite(tmp_path):
    args = ["simulate", "--count", "1", "--out", str(tmp_path)]
    assert main(args) == 0
    assert main(args) == 1
    assert main(args + ["--force"]) == 0


def test_jobs_do_not_change_output(tmp_path):
    assert main(["simulate", "--count", "4", "--seed", "2", "--out", str(tmp_path / "one")]) == 0
    assert main(["simulate", "--count", "4", "--seed", "2", "--jobs", "2", "--out", str(tmp_path / "two")]) == 0
    for p in (tmp_path / "one").iterdir():
        assert p.read_bytes() == (tmp_path / "two" / p.name).read_bytes()


@pytest.mark.parametrize("name", SCENES)
def test_golden_answers(tmp_path, name):
    assert main(["simulate", "--config", str(FIXTURES / f"{name}.config.json"), "--out", str(tmp_path)]) == 0
    questions = FIXTURES / f"{name}.questions.txt"
    before = questions.read_bytes()
    out = tmp_path / "answers.tsv"
    assert main(["answer", str(tmp_path / f"{name}.trace.json"), str(questions), "--out", str(out)]) == 0
    assert out.read_text() == (FIXTURES / f"{name}.expected.tsv").read_text()
    assert questions.read_bytes() == before


def test_empty_questions(tmp_path, capsys):
    main(["simulate", "--config", str(FIXTURES / "lanes.config.json"), "--out", str(tmp_path)])
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert main(["answer", str(tmp_path / "lanes.trace.json"), str(empty)]) == 0
    assert capsys.readouterr().out == ""


def test_failed_question_exit_code(tmp_path, capsys):
    main(["simulate", "--config", str(FIXTURES / "lanes.config.json"), "--out", str(tmp_path)])
    qs = tmp_path / "q.txt"
    qs.write_text("How many objects exit the scene? # ok\nHow many pink cubes exit the scene? # bad\n")
    assert main(["answer", str(tmp_path / "lanes.trace.json"), str(qs)]) == 1
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "ok\t1"
    assert lines[1].startswith("bad\terror: ")


def test_missing_trace_is_input_error(tmp_path):
    qs = tmp_path / "q.txt"
    qs.write_text("How many objects exit the scene?\n")
    assert main(["answer", str(tmp_path / "nope.json"), str(qs)]) == 1


def test_variant_and_dims_flags(tmp_path, capsys):
    main(["simulate", "--config", str(FIXTURES / "chain.config.json"), "--out", str(tmp_path)])
    trace = str(tmp_path / "chain.trace.json")
    qs = str(FIXTURES / "chain.questions.txt")
    expected = (FIXTURES / "chain.expected.tsv").read_text()
    for flags in (["--variant", "H0"], ["--variant", "H1"], ["--dims", "2"]):
        capsys.readouterr()
        assert main(["answer", trace, qs, *flags]) == 0
        assert capsys.readouterr().out == expected


def test_whatif_through_cli(tmp_path, capsys):
    main(["simulate", "--config", str(FIXTURES / "chain.config.json"), "--out", str(tmp_path)])
    qs = tmp_path / "q.txt"
    qs.write_text(
        "Without the red cube, which of the following will happen? | the exit of the cylinder"
        " | the collision between the sphere and the cylinder # cf\n"
    )
    trace, truth = str(tmp_path / "chain.trace.json"), str(tmp_path / "chain.truth.json")
    assert main(["answer", trace, str(qs), "--truth", truth]) == 0
    assert capsys.readouterr().out == "cf\tno,no\n"
    assert main(["answer", trace, str(qs)]) == 1


def test_eval_definitions(tmp_path, capsys):
    oracle = tmp_path / "oracle.tsv"
    oracle.write_text("a\t3\nb\tyes,no,no,yes\n")
    same = tmp_path / "same.tsv"
    same.write_text(oracle.read_text())
    one_off = tmp_path / "off.tsv"
    one_off.write_text("a\t3\nb\tyes,no,yes,yes\n")
    assert main(["eval", str(oracle), str(same)]) == 0
    assert "100.00%" in capsys.readouterr().out
    report = tmp_path / "report.json"
    assert main(["eval", str(oracle), str(one_off), "--report", str(report)]) == 0
    agg = json.loads(report.read_text())["accuracy"]["explanatory"]
    assert agg["per_opt"] == 0.75 and agg["per_ques"] == 0.0
    capsys.readouterr()
    assert main(["eval", str(oracle), str(same), str(one_off), "--labels", "H0,H2"]) == 0
    table = capsys.readouterr().out
    assert table.splitlines()[0].split() == ["family", "H0", "H2"]


def test_eval_id_mismatch(tmp_path):
    oracle = tmp_path / "oracle.tsv"
    oracle.write_text("a\t3\n")
    other = tmp_path / "other.tsv"
    other.write_text("b\t3\n")
    assert main(["eval", str(oracle), str(other)]) == 1


def test_per_question_never_exceeds_per_option():
    report = build_report([("a", "yes,no"), ("b", "no,no")], [("a", "yes,yes"), ("b", "no,no")])
    agg = report.aggregates()["explanatory"]
    assert agg["per_ques"] <= agg["per_opt"]
    assert isinstance(report, RunReport)


def test_questions_calibrate_analyze(tmp_path):
    scenes = tmp_path / "scenes"
    assert main(["simulate", "--count", "3", "--seed", "1", "--out", str(scenes)]) == 0
    truth = scenes / "scene_00000.truth.json"
    qs, orc = tmp_path / "q.txt", tmp_path / "o.tsv"
    assert main(["questions", str(truth), "--kinds", "descriptive,explanatory,predictive,counterfactual",
                 "--count", "20", "--observed", "100", "--out", str(qs), "--oracle-out", str(orc)]) == 0
    assert len(qs.read_text().splitlines()) == len(orc.read_text().splitlines())
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"d_move": [400], "d_stop": [400], "d_prox": [100000], "d_vel": [100, 200]}))
    th = tmp_path / "th.txt"
    assert main(["calibrate", str(scenes), "--grid", str(grid), "--questions-per-scene", "10",
                 "--out", str(th), "--table", str(tmp_path / "t.csv")]) == 0
    assert "d_prox = 100000" in th.read_text()
    assert main(["analyze", str(scenes), "--out", str(tmp_path / "an")]) == 0
    assert (tmp_path / "an" / "distances.csv").read_text().startswith("pair_id,frame,dx,dy,dz,colliding\n")


@pytest.mark.skipif(shutil.which("eventqa") is None, reason="console script not installed")
def test_console_script(tmp_path):
    done = subprocess.run(["eventqa", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "simulate" in done.stdout
    done = subprocess.run([sys.executable, "-m", "eventqa.cli", "simulate", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert done.returncode == 0

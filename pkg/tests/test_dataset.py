import json

import pytest

from hintloop.backend import CallUsage
from hintloop.dataset import (
    DuplicateIdError,
    Hint,
    HintSequence,
    ParseError,
    Problem,
    RunRecord,
    TrainingInstance,
    ValidationError,
    load_dataset,
    save_dataset,
)

from conftest import make_problem


def _write_lines(path, objs):
    with path.open("w", encoding="utf-8") as f:
        for obj in objs:
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")


def _problem_dict(i):
    return {
        "id": f"p{i}",
        "statement": f"Problem number {i}: compute something.",
        "dataset_name": "toy",
        "reference_solution": f"First do a thing.\n\nThen conclude {i}.",
        "ground_truth_answer": str(i),
    }


def test_load_problem_file_of_75(tmp_path):
    path = tmp_path / "problems.jsonl"
    _write_lines(path, [_problem_dict(i) for i in range(75)])
    problems = load_dataset(path, "problems")
    assert len(problems) == 75
    assert problems[0].id == "p0"


def test_empty_file_is_empty_collection(tmp_path):
    path = tmp_path / "problems.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_dataset(path, "problems") == []


def test_hint_index_gap_is_named(tmp_path):
    path = tmp_path / "hints.jsonl"
    _write_lines(path, [{
        "problem_id": "p1",
        "generator_model": "m",
        "hints": [
            {"index": 1, "text": "a", "provenance": "oracle_llm"},
            {"index": 3, "text": "b", "provenance": "oracle_llm"},
        ],
    }])
    with pytest.raises(ValidationError, match=r"missing \[2\]"):
        load_dataset(path, "hints")


def test_round_trip_three_problems(tmp_path):
    problems = [
        make_problem("a", "What is 1+1?", answer="2"),
        make_problem("b", "Integrate x.", solution="Use the power rule.\n\nGet x^2/2."),
        make_problem("c", "State, do not prove.", tags=["proof"]),
    ]
    path = tmp_path / "problems.jsonl"
    save_dataset(problems, path)
    assert load_dataset(path, "problems") == problems


def test_round_trip_preserves_unicode_bytes(tmp_path):
    problem = make_problem("u", "Show that √2 is irrational.", answer="√2")
    path = tmp_path / "problems.jsonl"
    save_dataset([problem], path)
    raw = path.read_bytes()
    assert "√2".encode("utf-8") in raw
    assert load_dataset(path, "problems") == [problem]
    # a second save of the reloaded collection is byte-identical
    path2 = tmp_path / "again.jsonl"
    save_dataset(load_dataset(path, "problems"), path2)
    assert path2.read_bytes() == raw


def test_save_to_unwritable_path_raises(tmp_path):
    with pytest.raises(OSError):
        save_dataset([make_problem()], tmp_path)  # a directory, not a file


def test_duplicate_problem_id_rejected(tmp_path):
    path = tmp_path / "problems.jsonl"
    _write_lines(path, [_problem_dict(1), _problem_dict(1)])
    with pytest.raises(DuplicateIdError, match="p1"):
        load_dataset(path, "problems")


def test_malformed_line_reports_file_and_line(tmp_path):
    path = tmp_path / "problems.jsonl"
    path.write_text('{"id": "p1"}\nnot json at all\n', encoding="utf-8")
    with pytest.raises((ParseError, ValidationError), match=rf"{path}:1"):
        load_dataset(path, "problems")  # line 1 is missing fields
    _write_lines(path, [_problem_dict(1)])
    with path.open("a", encoding="utf-8") as f:
        f.write("not json at all\n")
    with pytest.raises(ParseError, match=rf"{path}:2"):
        load_dataset(path, "problems")


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "problems.jsonl"
    path.write_text(
        json.dumps(_problem_dict(1)) + "\n\n" + json.dumps(_problem_dict(2)) + "\n",
        encoding="utf-8",
    )
    assert len(load_dataset(path, "problems")) == 2


def test_normalized_answer_is_stored():
    problem = make_problem(answer="\\boxed{\\frac{1}{2}}")
    assert problem.ground_truth_normalized == "1/2"
    assert "ground_truth_normalized" in problem.to_dict()


def test_ineligible_problem_is_loadable_but_flagged():
    problem = make_problem()
    assert not problem.eligible_for_hints
    assert make_problem(answer="4").eligible_for_hints
    assert make_problem(solution="steps").eligible_for_hints


def test_empty_hint_sequence_is_legal():
    sequence = HintSequence(problem_id="p", hints=[])
    assert len(sequence) == 0


def test_hint_validation():
    with pytest.raises(ValidationError):
        Hint(index=0, text="x", provenance="oracle_llm")
    with pytest.raises(ValidationError):
        Hint(index=1, text="", provenance="oracle_llm")
    with pytest.raises(ValidationError):
        Hint(index=1, text="x", provenance="martian")


def test_training_round_trip(tmp_path):
    instances = [
        TrainingInstance("p1", 1, "statement", "", "first hint"),
        TrainingInstance("p1", 2, "statement", "some work", "second hint"),
    ]
    path = tmp_path / "training.jsonl"
    save_dataset(instances, path)
    assert load_dataset(path, "training") == instances


def test_training_duplicate_step_rejected(tmp_path):
    path = tmp_path / "training.jsonl"
    row = TrainingInstance("p1", 1, "s", "", "h").to_dict()
    _write_lines(path, [row, row])
    with pytest.raises(DuplicateIdError):
        load_dataset(path, "training")


def _run_record(run_id="p1:no_hint:none:s0", mode="no_hint", calls=1, hints_used=0):
    usage = [CallUsage(10, 5, 0.1) for _ in range(calls)]
    return RunRecord(
        run_id=run_id, problem_id="p1", mode=mode, hint_source=None,
        hints_used=hints_used, samples=1, samples_effective=calls,
        final_answer_raw="4", final_answer_normalized="4", reasoning_summary="",
        per_call_usage=usage,
        total_prompt_tokens=10 * calls, total_completion_tokens=5 * calls,
        wall_time=0.1 * calls, seed=0,
    )


def test_runs_round_trip(tmp_path):
    records = [_run_record(), _run_record(run_id="other:no_hint:none:s1")]
    path = tmp_path / "runs.jsonl"
    save_dataset(records, path)
    assert load_dataset(path, "runs") == records


def test_run_record_totals_must_match():
    with pytest.raises(ValidationError, match="totals"):
        RunRecord(
            run_id="r", problem_id="p", mode="no_hint", hint_source=None,
            hints_used=0, samples=1, samples_effective=1,
            final_answer_raw="", final_answer_normalized="", reasoning_summary="",
            per_call_usage=[CallUsage(10, 5)], total_prompt_tokens=99,
            total_completion_tokens=5, wall_time=0.0, seed=0,
        )


def test_run_record_call_count_law_enforced():
    with pytest.raises(ValidationError, match="T\\+1"):
        RunRecord(
            run_id="r", problem_id="p", mode="hinted", hint_source="llm",
            hints_used=3, samples=1, samples_effective=1,
            final_answer_raw="", final_answer_normalized="", reasoning_summary="",
            per_call_usage=[CallUsage(1, 1)], total_prompt_tokens=1,
            total_completion_tokens=1, wall_time=0.0, seed=0,
        )


def test_unknown_schema_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown schema"):
        load_dataset(tmp_path / "x.jsonl", "nope")

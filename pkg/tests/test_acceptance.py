"""Acceptance criteria, one test per criterion.

Each test prints an ``ACCEPTANCE PASS`` line on success (visible with -s or
in captured output); a failing criterion fails its test. Tolerances are
pinned here and nowhere else.
"""

import itertools
import json
import math
import os
import random
import time
from pathlib import Path

import pytest
import yaml

from hintloop import cli
from hintloop.backend import MockBackend, ScriptEntry
from hintloop.dataset import (
    Hint,
    HintSequence,
    Problem,
    RunRecord,
    TrainingInstance,
    load_dataset,
    save_dataset,
)
from hintloop.backend import CallUsage
from hintloop.hinter import check_leakage
from hintloop.metrics import accuracy, stability, token_reduction
from hintloop.normalize import normalize_answer
from hintloop.solver import (
    majority_vote,
    solve_hinted,
    solve_no_hint,
    solve_self_consistency,
)
from hintloop.verify import METHOD_EXACT, Verdict

from conftest import hinted_solve_script, latexish_strings, make_hints, make_problem, synthesis_reply

FIXTURES = Path(__file__).parent / "fixtures"


def _pass(name):
    print(f"ACCEPTANCE PASS: {name}")


# ----------------------------------------------------------------------------
# Call-count law: calls = T+1 (hinted), 1 (no-hint), K (SC); 200 random solves
# ----------------------------------------------------------------------------

def test_call_count_law_over_200_randomized_solves():
    rng = random.Random(101)
    started = time.perf_counter()
    violations = 0
    for case in range(200):
        problem = make_problem(f"p{case}", f"Problem {case}.", answer=str(10_000 + case))
        mode = rng.choice(["hinted", "no_hint", "sc"])
        if mode == "hinted":
            t = rng.randint(1, 8)
            hints = make_hints(problem.id, [f"hint-{case:03d}-{i:02d}" for i in range(t)])
            states = [f"state-{case:03d}-{i:02d}" for i in range(t)]
            backend = MockBackend(hinted_solve_script(states, "99"))
            record = solve_hinted(problem, hints, backend, seed=case)
            expected = t + 1
        elif mode == "no_hint":
            backend = MockBackend([ScriptEntry(synthesis_reply("99"), 10, 5)])
            record = solve_no_hint(problem, backend, seed=case)
            expected = 1
        else:
            k = rng.randint(1, 8)
            script = [ScriptEntry(synthesis_reply(str(rng.randint(0, 3))), 10, 5)
                      for _ in range(k)]
            record = solve_self_consistency(problem, MockBackend(script), k=k, seed=case)
            expected = k
        if len(record.per_call_usage) != expected:
            violations += 1
    elapsed = time.perf_counter() - started
    assert violations == 0
    assert elapsed < 10.0, f"200 mock solves took {elapsed:.1f}s"
    _pass(f"call-count law, 200 randomized solves, 0 violations, {elapsed:.2f}s")


# ----------------------------------------------------------------------------
# State threading / no lookahead over 100 random hinted solves (T <= 10)
# ----------------------------------------------------------------------------

def test_state_threading_no_lookahead_100_cases():
    rng = random.Random(202)
    violations = 0
    for case in range(100):
        t_count = rng.randint(1, 10)
        problem = make_problem(f"p{case}", f"statement-{case:03d}-full")
        hint_texts = [f"hint-{case:03d}-{t:02d}-token" for t in range(1, t_count + 1)]
        states = [f"state-{case:03d}-{t:02d}-token" for t in range(1, t_count + 1)]
        hints = make_hints(problem.id, hint_texts)
        backend = MockBackend(hinted_solve_script(states, "7"))
        solve_hinted(problem, hints, backend, seed=case)

        for t in range(1, t_count + 1):
            rendered = backend.calls[t - 1].rendered()
            wanted_state = states[t - 2] if t > 1 else problem.statement
            if wanted_state not in rendered:
                violations += 1
            if hint_texts[t - 1] not in rendered:
                violations += 1
            for future in hint_texts[t:]:
                if future in rendered:
                    violations += 1
    assert violations == 0
    _pass("state threading with no hint lookahead, 100 random hinted solves")


# ----------------------------------------------------------------------------
# Determinism: the 5-problem fixture pipeline twice -> byte-identical outputs
# ----------------------------------------------------------------------------

def _run_fixture_pipeline(tmp_path, tag):
    out = tmp_path / tag
    config_path = tmp_path / f"config_{tag}.yaml"
    config_path.write_text(yaml.safe_dump({
        "paths": {"problems": str(FIXTURES / "problems_five.jsonl"), "out_dir": str(out)},
        "backends": {"hinter": {"kind": "mock"}, "solver": {"kind": "mock"}},
        "run": {"max_hints": 2},
    }), encoding="utf-8")
    assert cli.main(["gen-hints", "--config", str(config_path)]) == 0
    for mode in ("hinted", "no_hint", "sc"):
        assert cli.main(["solve", "--config", str(config_path), "--mode", mode,
                         "--k", "3"]) == 0
    assert cli.main(["verify", "--config", str(config_path)]) == 0
    assert cli.main(["report", "--config", str(config_path)]) == 0
    return out


def test_end_to_end_determinism(tmp_path):
    first = _run_fixture_pipeline(tmp_path, "one")
    second = _run_fixture_pipeline(tmp_path, "two")
    for name in ("hints.jsonl", "runs.jsonl", "verdicts.jsonl", "report.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), \
            f"{name} differs between identical executions"
    _pass("byte-identical hints/runs/verdicts/report across two executions")


# ----------------------------------------------------------------------------
# Published derived values reproduced from published inputs
# ----------------------------------------------------------------------------

def test_metrics_arithmetic_reproduces_published_values():
    assert token_reduction(198.43, 145.36) == pytest.approx(26.74, abs=0.01)
    assert token_reduction(236.79, 152.70) == pytest.approx(35.52, abs=0.01)

    def verdicts(n_correct, n_total):
        return [Verdict(f"r{i}", f"p{i}", "correct" if i < n_correct else "incorrect",
                        METHOD_EXACT) for i in range(n_total)]

    assert round(accuracy(verdicts(59, 75))[2], 2) == 78.67
    assert round(accuracy(verdicts(0, 29))[2], 2) == 0.00

    mean, se = stability([0.0] * 8)
    assert round(mean, 2) == 0.00 and round(se, 2) == 0.00
    _pass("token reduction 26.74/35.52, accuracy 78.67/0.00, stability 0.00±0.00")


# ----------------------------------------------------------------------------
# Stability formula against an independent brute-force oracle
# ----------------------------------------------------------------------------

def test_stability_against_brute_force_oracle():
    values = [50.0, 25.0, 25.0, 0.0]
    # brute force, written out without the library under test
    total = 0.0
    for v in values:
        total += v
    mean_bf = total / 4
    squares = 0.0
    for v in values:
        squares += (v - mean_bf) * (v - mean_bf)
    se_bf = math.sqrt(squares / 3) / math.sqrt(4)

    mean, se = stability(values)
    assert mean == pytest.approx(25.00, abs=0.01)
    assert se == pytest.approx(10.21, abs=0.01)
    assert mean == pytest.approx(mean_bf, abs=1e-9)
    assert se == pytest.approx(se_bf, abs=1e-9)
    _pass("stability([50,25,25,0]) = (25.00, 10.21) vs brute-force oracle")


# ----------------------------------------------------------------------------
# Majority vote vs exhaustive brute-force oracle
# ----------------------------------------------------------------------------

def _brute_force_vote(seq):
    best_count = max(seq.count(c) for c in set(seq))
    tied = [c for c in set(seq) if seq.count(c) == best_count]
    return min(tied, key=lambda c: seq.index(c))


def test_majority_vote_exhaustive():
    disagreements = 0
    checked = 0
    for length in range(1, 5):
        for seq in itertools.product("abc", repeat=length):
            seq = list(seq)
            checked += 1
            if majority_vote(seq) != _brute_force_vote(seq):
                disagreements += 1
    assert checked == 3 + 9 + 27 + 81
    assert disagreements == 0
    _pass(f"majority vote agrees with brute force on all {checked} multisets")


# ----------------------------------------------------------------------------
# Leakage detector: 30 handcrafted cases with hand labels
# ----------------------------------------------------------------------------

LEAKAGE_CASES = [
    # (hint, answer, leaks?)
    ("substitute x = 42 to check", "42", True),
    ("consider the AM-GM inequality", "42", False),
    ("the answer is 1/2", "\\frac{1}{2}", True),
    ("so we get \\frac{3}{7} at the end", "3/7", True),
    ("the total is 1,000 dollars", "1000", True),
    ("try n = 42 here", "42", True),
    ("x = 420 is too big", "42", False),
    ("the constant 1342 appears", "42", False),
    ("compute 3.42 first", "42", False),
    ("42.5 is an approximation", "42", False),
    ("expand (x+1)^2 and compare", "2", False),
    ("use 2 here", "2", True),
    ("the pair (1,2) works", "2", True),
    ("x_2 is the second root", "2", False),
    ("half, i.e. 1/2, of the total", "2", False),
    ("the answer is 7.", "7", True),
    ("roughly 7.5 hours", "7", False),
    ("\\boxed{9} concludes it", "9", True),
    ("the answer is nine", "9", False),
    ("a sum of $18$ dollars", "18", True),
    ("the largest is 18112", "18", False),
    ("answer: x^2 - 4", "x^2 - 4", True),
    ("factor as (x-2)(x+2)", "x^2 - 4", False),
    ("the limit equals \\pi/4", "π/4", False),
    ("the limit equals π/4 exactly", "π/4", True),
    ("Answer is 1/2", "0.5", False),
    ("We obtain N=113 finally", "113", True),
    ("note that 11 and 3 are coprime", "113", False),
    ("THE ANSWER IS FORTY-TWO: 42", "42", True),
    ("try the substitution u = x+1", "42", False),
]


def test_leakage_detector_handcrafted_suite():
    assert len(LEAKAGE_CASES) == 30
    mismatches = [
        (hint, answer, expected, check_leakage(hint, answer).leaked)
        for hint, answer, expected in LEAKAGE_CASES
        if check_leakage(hint, answer).leaked != expected
    ]
    assert mismatches == [], f"disagreements with hand labels: {mismatches}"
    _pass("leakage detector matches all 30 hand-labeled cases")


# ----------------------------------------------------------------------------
# Normalizer idempotence over >= 1000 generated strings
# ----------------------------------------------------------------------------

def test_normalizer_idempotent_on_1000_strings():
    rng = random.Random(303)
    failures = 0
    strings = latexish_strings(rng, 1200)
    assert len(strings) >= 1000
    for raw in strings:
        once = normalize_answer(raw)
        if normalize_answer(once) != once:
            failures += 1
    assert failures == 0
    _pass(f"normalize∘normalize = normalize on {len(strings)} generated strings")


# ----------------------------------------------------------------------------
# JSONL round-trip on randomized valid collections, all four schemas
# ----------------------------------------------------------------------------

_WORDS = ("sum", "angle", "prime", "root", "limit", "set", "π", "√2", "modulo",
          "series", "line", "cosine")
_ANSWERS = ("42", "\\frac{1}{2}", "x+1", "1,000", "0.5", "√2", "113")


def _random_problem(rng, i):
    def words(n):
        return " ".join(rng.choice(_WORDS) for _ in range(n))

    return Problem(
        id=f"p{i:05d}",
        statement=words(5) + "?",
        dataset_name=rng.choice(("alpha", "beta")),
        reference_solution=(words(6) + "\n\n" + words(4)) if rng.random() < 0.7 else None,
        ground_truth_answer=rng.choice(_ANSWERS) if rng.random() < 0.7 else None,
        tags=rng.sample(["algebra", "geometry", "nt"], k=rng.randint(0, 2)),
    )


def _random_hint_sequence(rng, i):
    t = rng.randint(0, 6)
    return HintSequence(
        problem_id=f"p{i:05d}",
        hints=[Hint(j + 1, f"hint {j} " + rng.choice(_WORDS), rng.choice(
            ("oracle_llm", "distilled_slm", "nft_slm", "human_edited"))) for j in range(t)],
        generator_model=rng.choice(("big-model", "small-model")),
        created_at="2024-06-01T00:00:00Z" if rng.random() < 0.5 else None,
    )


def _random_training(rng, i):
    return TrainingInstance(
        problem_id=f"p{i % 97:05d}",
        step_index=i // 97 + 1,
        problem_statement=" ".join(rng.choice(_WORDS) for _ in range(4)),
        reasoning_state="" if rng.random() < 0.3 else " ".join(
            rng.choice(_WORDS) for _ in range(8)),
        target_hint="do " + rng.choice(_WORDS),
    )


def _random_run(rng, i):
    mode = rng.choice(("no_hint", "hinted", "self_consistency"))
    if mode == "no_hint":
        hints_used, samples, calls = 0, 1, 1
        source = None
    elif mode == "hinted":
        hints_used = rng.randint(1, 6)
        samples, calls = 1, hints_used + 1
        source = rng.choice(("llm", "ft_slm", "nft_slm"))
    else:
        hints_used = 0
        samples = rng.randint(1, 8)
        calls = samples
        source = None
    usage = [CallUsage(rng.randint(0, 500), rng.randint(0, 300),
                       round(rng.random() * 3, 6), estimated=rng.random() < 0.2,
                       retries=rng.randint(0, 2)) for _ in range(calls)]
    answer = rng.choice(_ANSWERS)
    return RunRecord(
        run_id=f"run{i:05d}",
        problem_id=f"p{i:05d}",
        mode=mode,
        hint_source=source,
        hints_used=hints_used,
        samples=samples,
        samples_effective=calls,
        final_answer_raw=answer,
        final_answer_normalized=normalize_answer(answer),
        reasoning_summary=rng.choice(("", "short recap")),
        per_call_usage=usage,
        total_prompt_tokens=sum(u.prompt_tokens for u in usage),
        total_completion_tokens=sum(u.completion_tokens for u in usage),
        wall_time=round(sum(u.wall_time for u in usage), 6),
        seed=rng.randint(0, 10_000),
        verdict=rng.choice((None, "correct", "incorrect", "pending_review")),
    )


def test_jsonl_round_trip_all_four_schemas(tmp_path):
    rng = random.Random(404)
    generators = {
        "problems": _random_problem,
        "hints": _random_hint_sequence,
        "training": _random_training,
        "runs": _random_run,
    }
    total = 0
    for schema, generate in generators.items():
        offset = 0
        for chunk in range(3):
            collection = [generate(rng, offset + i) for i in range(200)]
            offset += 200
            total += len(collection)
            path = tmp_path / f"{schema}_{chunk}.jsonl"
            save_dataset(collection, path)
            assert load_dataset(path, schema) == collection, f"{schema} round trip failed"
    assert total >= 4 * 500
    _pass(f"load(save(x)) == x for all four schemas over {total} records")


# ----------------------------------------------------------------------------
# Live smoke against a local OpenAI-compatible server (opt-in, not CI)
# ----------------------------------------------------------------------------

@pytest.mark.skipif(
    not os.environ.get("HINTLOOP_LIVE_BASE_URL"),
    reason="set HINTLOOP_LIVE_BASE_URL (and optionally HINTLOOP_LIVE_MODEL) "
           "to run the live smoke test",
)
def test_live_smoke_three_problem_hinted_run(tmp_path):
    base_url = os.environ["HINTLOOP_LIVE_BASE_URL"]
    model = os.environ.get("HINTLOOP_LIVE_MODEL", "")
    out = tmp_path / "live"
    config_path = tmp_path / "live.yaml"
    problems = tmp_path / "problems.jsonl"
    save_dataset([
        make_problem("live-1", "Compute 12 + 30.",
                     solution="Add the tens.\n\nThen add the rest.", answer="42"),
        make_problem("live-2", "What is 9 squared?",
                     solution="Write 9*9.\n\nMultiply.", answer="81"),
        make_problem("live-3", "How many sides does a hexagon have?",
                     solution="Recall the prefix hex.\n\nCount six.", answer="6"),
    ], problems)
    config_path.write_text(yaml.safe_dump({
        "paths": {"problems": str(problems), "out_dir": str(out)},
        "backends": {
            "hinter": {"kind": "http", "base_url": base_url, "model": model,
                       "api_key_env": "HINTLOOP_LIVE_API_KEY", "timeout_s": 120},
            "solver": {"kind": "http", "base_url": base_url, "model": model,
                       "api_key_env": "HINTLOOP_LIVE_API_KEY", "timeout_s": 120},
        },
        "run": {"max_hints": 4},
    }), encoding="utf-8")
    assert cli.main(["gen-hints", "--config", str(config_path)]) in (0, 2)
    assert cli.main(["solve", "--config", str(config_path), "--mode", "hinted"]) in (0, 2)
    assert cli.main(["verify", "--config", str(config_path)]) == 0
    assert cli.main(["report", "--config", str(config_path)]) == 0
    records = load_dataset(out / "runs.jsonl", "runs")
    assert records, "live run produced no records"
    assert (out / "report.csv").exists()
    # no accuracy threshold asserted: well-formedness only
    _pass("live smoke: hinted run produced well-formed runs.jsonl and report")

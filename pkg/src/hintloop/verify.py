"""Answer verification: exact match, judge model, human overrides.

The pipeline is monotone — exact match first, an optional judge second,
human overrides last — and a later stage never silently reverses an
agreed-correct verdict. Disagreement or judge uncertainty parks the run in
``pending_review``; only pending verdicts may be overridden by a human.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .backend import ROLE_SYSTEM, ROLE_USER, BackendError, DecodingParams, transcript
from .dataset import Problem, RunRecord, ValidationError
from .normalize import normalize_answer
from .templates import PromptTemplate, default_template

logger = logging.getLogger(__name__)

OUTCOME_CORRECT = "correct"
OUTCOME_INCORRECT = "incorrect"
OUTCOME_PENDING = "pending_review"
OUTCOMES = (OUTCOME_CORRECT, OUTCOME_INCORRECT, OUTCOME_PENDING)

METHOD_EXACT = "exact_match"
METHOD_JUDGE = "judge_model"
METHOD_HUMAN = "human_override"
METHODS = (METHOD_EXACT, METHOD_JUDGE, METHOD_HUMAN)

# judge calls always decode deterministically and must answer in JSON
JUDGE_DECODING = DecodingParams(temperature=0.0, top_p=1.0, response_format="constrained_json")


class VerifyError(Exception):
    pass


class MissingGroundTruthError(VerifyError):
    """Exact match needs a ground-truth answer; route the run to the judge."""


@dataclass
class Verdict:
    run_id: str
    problem_id: str
    outcome: str
    method: str
    judge_rationale: str | None = None

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise ValidationError(f"unknown outcome {self.outcome!r}")
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")

    def to_dict(self) -> dict:
        d: dict = {
            "run_id": self.run_id,
            "problem_id": self.problem_id,
            "outcome": self.outcome,
            "method": self.method,
        }
        if self.judge_rationale is not None:
            d["judge_rationale"] = self.judge_rationale
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        return cls(
            run_id=str(d["run_id"]),
            problem_id=str(d["problem_id"]),
            outcome=str(d["outcome"]),
            method=str(d["method"]),
            judge_rationale=d.get("judge_rationale"),
        )


def verify_exact(run: RunRecord, problem: Problem) -> Verdict:
    """Binary outcome by equality of normalized answers."""
    if problem.ground_truth_answer is None:
        raise MissingGroundTruthError(
            f"problem {problem.id!r} has no ground-truth answer; use the judge path"
        )
    truth = problem.ground_truth_normalized or normalize_answer(problem.ground_truth_answer)
    answer = run.final_answer_normalized or normalize_answer(run.final_answer_raw)
    correct = bool(answer) and answer == truth
    return Verdict(
        run_id=run.run_id,
        problem_id=problem.id,
        outcome=OUTCOME_CORRECT if correct else OUTCOME_INCORRECT,
        method=METHOD_EXACT,
    )


def verify_with_judge(
    run: RunRecord,
    problem: Problem,
    judge_backend,
    judge_template: PromptTemplate | None = None,
) -> Verdict:
    """Consult a judge model and reconcile it with exact match.

    Agreement yields the shared outcome; disagreement, judge uncertainty, or
    a malformed judge reply (after one repair ask) yields pending_review.
    """
    judge_template = judge_template or default_template("judge")
    reference = problem.ground_truth_answer or problem.reference_solution or "(not provided)"
    user = judge_template.render(
        statement=problem.statement,
        ground_truth=reference,
        final_answer=run.final_answer_raw or "(empty)",
        reasoning_summary=run.reasoning_summary or "(none)",
    )
    judge_outcome, rationale = _ask_judge(judge_backend, judge_template.system_text, user)

    exact: Verdict | None = None
    if problem.ground_truth_answer is not None:
        exact = verify_exact(run, problem)

    if judge_outcome is None:  # unusable judge reply
        outcome = OUTCOME_PENDING
    elif exact is None:
        outcome = judge_outcome if judge_outcome != "unsure" else OUTCOME_PENDING
    elif judge_outcome == "unsure" or judge_outcome != exact.outcome:
        outcome = OUTCOME_PENDING
    else:
        outcome = exact.outcome
    return Verdict(
        run_id=run.run_id,
        problem_id=problem.id,
        outcome=outcome,
        method=METHOD_JUDGE,
        judge_rationale=rationale,
    )


def _ask_judge(judge_backend, system_text: str, user: str) -> tuple[str | None, str | None]:
    """Returns (outcome, rationale); outcome None means the reply was unusable."""
    chat = transcript((ROLE_SYSTEM, system_text), (ROLE_USER, user))
    try:
        text, _ = judge_backend.complete(chat, JUDGE_DECODING)
        parsed = _parse_judge_reply(text)
        if parsed is None:
            repair = chat.copy()
            repair.add("assistant", text)
            repair.add(ROLE_USER, 'Reply again with only a JSON object: '
                                  '{"verdict": "correct"|"incorrect"|"unsure", "rationale": "..."}')
            text, _ = judge_backend.complete(repair, JUDGE_DECODING)
            parsed = _parse_judge_reply(text)
    except BackendError as exc:
        logger.warning("judge call failed: %s", exc)
        return None, f"judge unavailable: {exc}"
    if parsed is None:
        return None, "judge reply malformed after repair"
    return parsed


def _parse_judge_reply(text: str) -> tuple[str, str | None] | None:
    cleaned = text.strip()
    start, end = cleaned.find("{"), cleaned.rfind("}")
    if 0 <= start < end:
        cleaned = cleaned[start: end + 1]
    try:
        obj = json.loads(cleaned)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    verdict = str(obj.get("verdict", "")).strip().lower()
    if verdict not in ("correct", "incorrect", "unsure"):
        return None
    rationale = obj.get("rationale")
    return verdict, (str(rationale) if rationale is not None else None)


def verify_run(run: RunRecord, problem: Problem, judge_backend=None,
               judge_template: PromptTemplate | None = None) -> Verdict:
    """Dispatch one run through the verification pipeline.

    Aborted runs are incorrect by construction. Without a judge, runs whose
    problem lacks a ground truth (proof-style) are marked pending_review.
    """
    if run.status != "ok":
        return Verdict(run.run_id, problem.id, OUTCOME_INCORRECT, METHOD_EXACT)
    if judge_backend is not None:
        return verify_with_judge(run, problem, judge_backend, judge_template)
    try:
        return verify_exact(run, problem)
    except MissingGroundTruthError:
        logger.info("problem %s has no ground truth and no judge is configured; "
                    "marking run %s pending_review", problem.id, run.run_id)
        return Verdict(run.run_id, problem.id, OUTCOME_PENDING, METHOD_EXACT)


def apply_human_override(verdict_file: str | Path, verdicts: Sequence[Verdict]) -> list[Verdict]:
    """Replace pending verdicts according to a human-review file.

    The file is JSONL of {"run_id", "outcome"}. Overriding a verdict that is
    not pending_review, or naming an unknown run, is an error — the audit
    trail of machine-decided outcomes stays intact.
    """
    overrides: list[tuple[str, str]] = []
    path = Path(verdict_file)
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise VerifyError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict) or "run_id" not in obj or "outcome" not in obj:
                raise VerifyError(f"{path}:{lineno}: expected {{'run_id', 'outcome'}}")
            outcome = str(obj["outcome"])
            if outcome not in (OUTCOME_CORRECT, OUTCOME_INCORRECT):
                raise VerifyError(f"{path}:{lineno}: override outcome must be "
                                  f"'correct' or 'incorrect', got {outcome!r}")
            overrides.append((str(obj["run_id"]), outcome))

    by_run = {v.run_id: i for i, v in enumerate(verdicts)}
    out = list(verdicts)
    for run_id, outcome in overrides:
        if run_id not in by_run:
            raise VerifyError(f"override names unknown run_id {run_id!r}")
        current = out[by_run[run_id]]
        if current.outcome != OUTCOME_PENDING:
            raise VerifyError(
                f"run {run_id!r} is {current.outcome!r}, not pending_review; "
                "only pending verdicts may be overridden"
            )
        out[by_run[run_id]] = Verdict(
            run_id=current.run_id,
            problem_id=current.problem_id,
            outcome=outcome,
            method=METHOD_HUMAN,
            judge_rationale=current.judge_rationale,
        )
    return out


def save_verdicts(verdicts: Iterable[Verdict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for v in verdicts:
            f.write(json.dumps(v.to_dict(), ensure_ascii=False, separators=(", ", ": ")) + "\n")


def load_verdicts(path: str | Path) -> list[Verdict]:
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(Verdict.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValidationError) as exc:
                raise VerifyError(f"{path}:{lineno}: {exc}") from exc
    return out

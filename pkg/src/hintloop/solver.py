"""Hint-conditioned solving.

The hinted loop threads a reasoning state through one refinement call per
hint: the first call sees the problem and the first hint, every later call
sees only the previous state and the current hint (never a future hint).
After the last refinement a single synthesis call turns the state into a
final answer in constrained JSON. Refinements decode deterministically,
synthesis uses the mildly stochastic preset.

No-hint solving is a single synthesis call on the problem alone.
Self-consistency draws K independent no-hint samples on consecutive seeds
and majority-votes their normalized answers.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Sequence

from .backend import (
    REFINEMENT_DECODING,
    ROLE_SYSTEM,
    ROLE_USER,
    SYNTHESIS_DECODING,
    BackendError,
    CallUsage,
    DecodingParams,
    transcript,
)
from .dataset import (
    MODE_HINTED,
    MODE_NO_HINT,
    MODE_SELF_CONSISTENCY,
    STATUS_ABORTED,
    STATUS_OK,
    HintSequence,
    Problem,
    RunRecord,
)
from .normalize import normalize_answer
from .templates import PromptTemplate, default_template

logger = logging.getLogger(__name__)

# provenance of the hints used -> RunRecord.hint_source
HINT_SOURCE_BY_PROVENANCE = {
    "oracle_llm": "llm",
    "human_edited": "llm",
    "distilled_slm": "ft_slm",
    "nft_slm": "nft_slm",
}


class SolveError(Exception):
    pass


class SynthesisFormatError(SolveError):
    """The synthesis reply was not valid JSON even after one repair ask."""


@dataclass
class ReasoningState:
    """The solver's accumulated work after ``step`` refinement calls."""

    problem_id: str
    step: int = 0
    text: str = ""
    call_log: list[CallUsage] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValueError("step must be >= 0")
        if self.step == 0 and self.text:
            raise ValueError("the step-0 reasoning state is empty by definition")


@dataclass(frozen=True)
class SolveTemplates:
    refine_system: str
    synthesize_from_state: PromptTemplate
    synthesize_direct: PromptTemplate

    @classmethod
    def defaults(cls) -> "SolveTemplates":
        return cls(
            refine_system=default_template("solver_refine").system_text,
            synthesize_from_state=default_template("synthesize_from_state"),
            synthesize_direct=default_template("synthesize_direct"),
        )


def make_run_id(problem_id: str, mode: str, hint_source: str | None, seed: int) -> str:
    return f"{problem_id}:{mode}:{hint_source or 'none'}:s{seed}"


def solve_hinted(
    problem: Problem,
    hints: HintSequence,
    backend,
    templates: SolveTemplates | None = None,
    *,
    seed: int = 0,
    include_problem_every_step: bool = False,
    refine_decoding: DecodingParams = REFINEMENT_DECODING,
    synthesis_decoding: DecodingParams = SYNTHESIS_DECODING,
) -> RunRecord:
    """Run the hint-conditioned loop: T refinements then one synthesis.

    An empty hint sequence degenerates to the no-hint baseline so the two
    are comparable. A backend failure mid-loop yields an aborted record with
    the partial call log; it never raises for that case.
    """
    if hints.problem_id != problem.id:
        raise SolveError(f"hints belong to {hints.problem_id!r}, not {problem.id!r}")
    templates = templates or SolveTemplates.defaults()
    if len(hints) == 0:
        return solve_no_hint(problem, backend, templates, seed=seed,
                             synthesis_decoding=synthesis_decoding)

    source = HINT_SOURCE_BY_PROVENANCE[hints.hints[0].provenance]
    run_id = make_run_id(problem.id, MODE_HINTED, source, seed)
    state = ""
    usages: list[CallUsage] = []

    def aborted(message: str) -> RunRecord:
        logger.warning("run %s aborted: %s", run_id, message)
        return _record(run_id, problem, MODE_HINTED, source, len(hints), 1, 0,
                       "", "", usages, seed, status=STATUS_ABORTED, error=message)

    for t, hint in enumerate(hints.hints, start=1):
        turns: list[tuple[str, str]] = [(ROLE_SYSTEM, templates.refine_system)]
        if t == 1:
            turns.append((ROLE_USER, problem.statement))
        else:
            if include_problem_every_step:
                turns.append((ROLE_USER, problem.statement))
            turns.append((ROLE_USER, state))
        turns.append((ROLE_USER, hint.text))
        try:
            state, usage = backend.complete(transcript(*turns), refine_decoding)
        except BackendError as exc:
            return aborted(f"refinement {t} failed: {exc}")
        usages.append(usage)

    synth_user = templates.synthesize_from_state.render(reasoning_state=state)
    try:
        answer, summary, usage = _synthesize(
            backend, templates.synthesize_from_state.system_text, synth_user,
            synthesis_decoding.with_seed(seed),
        )
    except BackendError as exc:
        return aborted(f"synthesis failed: {exc}")
    usages.append(usage)
    return _record(run_id, problem, MODE_HINTED, source, len(hints), 1, 1,
                   answer, summary, usages, seed)


def solve_no_hint(
    problem: Problem,
    backend,
    templates: SolveTemplates | None = None,
    *,
    seed: int = 0,
    synthesis_decoding: DecodingParams = SYNTHESIS_DECODING,
) -> RunRecord:
    """Single direct synthesis call conditioned on the problem only."""
    templates = templates or SolveTemplates.defaults()
    run_id = make_run_id(problem.id, MODE_NO_HINT, None, seed)
    user = templates.synthesize_direct.render(statement=problem.statement)
    try:
        answer, summary, usage = _synthesize(
            backend, templates.synthesize_direct.system_text, user,
            synthesis_decoding.with_seed(seed),
        )
    except BackendError as exc:
        logger.warning("run %s aborted: %s", run_id, exc)
        return _record(run_id, problem, MODE_NO_HINT, None, 0, 1, 0, "", "", [], seed,
                       status=STATUS_ABORTED, error=str(exc))
    return _record(run_id, problem, MODE_NO_HINT, None, 0, 1, 1, answer, summary, [usage], seed)


def solve_self_consistency(
    problem: Problem,
    backend,
    templates: SolveTemplates | None = None,
    k: int = 8,
    *,
    seed: int = 0,
    synthesis_decoding: DecodingParams = SYNTHESIS_DECODING,
) -> RunRecord:
    """K independent stochastic no-hint samples, majority-voted.

    Sample i decodes with seed ``seed + i``. Failed samples are skipped and
    the effective sample count recorded; if every sample fails the solve
    errors out.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    templates = templates or SolveTemplates.defaults()
    run_id = make_run_id(problem.id, MODE_SELF_CONSISTENCY, None, seed)
    user = templates.synthesize_direct.render(statement=problem.statement)
    raw_answers: list[str] = []
    normalized: list[str] = []
    summaries: list[str] = []
    usages: list[CallUsage] = []
    for i in range(k):
        try:
            answer, summary, usage = _synthesize(
                backend, templates.synthesize_direct.system_text, user,
                synthesis_decoding.with_seed(seed + i),
            )
        except (BackendError, SynthesisFormatError) as exc:
            logger.warning("run %s: sample %d skipped: %s", run_id, i, exc)
            continue
        raw_answers.append(answer)
        normalized.append(normalize_answer(answer))
        summaries.append(summary)
        usages.append(usage)
    if not raw_answers:
        raise SolveError(f"run {run_id}: all {k} samples failed")
    winner = majority_vote(normalized)
    first = normalized.index(winner)
    return _record(run_id, problem, MODE_SELF_CONSISTENCY, None, 0, k, len(raw_answers),
                   raw_answers[first], summaries[first], usages, seed,
                   normalized_answer=winner)


def majority_vote(answers: Sequence[str]) -> str:
    """Most frequent answer; ties go to the earliest first occurrence."""
    if not answers:
        raise ValueError("majority vote needs at least one answer")
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for i, answer in enumerate(answers):
        counts[answer] = counts.get(answer, 0) + 1
        first_seen.setdefault(answer, i)
    return max(counts, key=lambda a: (counts[a], -first_seen[a]))


_FENCE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```$", re.DOTALL)


def parse_synthesis_reply(text: str) -> tuple[str, str]:
    """Extract (final_answer, reasoning_summary) from a synthesis reply."""
    cleaned = text.strip()
    fence = _FENCE.match(cleaned)
    if fence:
        cleaned = fence.group(1).strip()
    obj = None
    try:
        obj = json.loads(cleaned)
    except json.JSONDecodeError:
        start, end = cleaned.find("{"), cleaned.rfind("}")
        if 0 <= start < end:
            try:
                obj = json.loads(cleaned[start: end + 1])
            except json.JSONDecodeError:
                obj = None
    if not isinstance(obj, dict) or "final_answer" not in obj:
        raise ValueError("reply is not a JSON object with a 'final_answer' key")
    return str(obj["final_answer"]), str(obj.get("reasoning_summary", ""))


def _synthesize(backend, system_text: str, user_text: str,
                decoding: DecodingParams) -> tuple[str, str, CallUsage]:
    """One synthesis call with a single automatic repair on malformed JSON."""
    text, usage = backend.complete(
        transcript((ROLE_SYSTEM, system_text), (ROLE_USER, user_text)), decoding
    )
    try:
        answer, summary = parse_synthesis_reply(text)
        return answer, summary, usage
    except ValueError:
        logger.warning("synthesis reply was not valid JSON; asking once for a repair")
    repair = transcript(
        (ROLE_SYSTEM, system_text),
        (ROLE_USER, user_text),
        ("assistant", text),
        (ROLE_USER, 'That was not valid JSON. Reply again with only a JSON object '
                    'with keys "final_answer" and "reasoning_summary".'),
    )
    text2, usage2 = backend.complete(repair, decoding)
    merged = CallUsage(
        prompt_tokens=usage.prompt_tokens + usage2.prompt_tokens,
        completion_tokens=usage.completion_tokens + usage2.completion_tokens,
        wall_time=usage.wall_time + usage2.wall_time,
        estimated=usage.estimated or usage2.estimated,
        retries=usage.retries + usage2.retries,
    )
    try:
        answer, summary = parse_synthesis_reply(text2)
    except ValueError as exc:
        raise SynthesisFormatError(f"synthesis reply malformed after repair: {exc}") from exc
    return answer, summary, merged


def _record(run_id: str, problem: Problem, mode: str, hint_source: str | None,
            hints_used: int, samples: int, samples_effective: int,
            answer_raw: str, summary: str, usages: list[CallUsage], seed: int,
            status: str = STATUS_OK, error: str | None = None,
            normalized_answer: str | None = None) -> RunRecord:
    if normalized_answer is None:
        normalized_answer = normalize_answer(answer_raw) if answer_raw else ""
    return RunRecord(
        run_id=run_id,
        problem_id=problem.id,
        mode=mode,
        hint_source=hint_source,
        hints_used=hints_used,
        samples=samples,
        samples_effective=samples_effective,
        final_answer_raw=answer_raw,
        final_answer_normalized=normalized_answer,
        reasoning_summary=summary,
        per_call_usage=list(usages),
        total_prompt_tokens=sum(u.prompt_tokens for u in usages),
        total_completion_tokens=sum(u.completion_tokens for u in usages),
        wall_time=round(sum(u.wall_time for u in usages), 6),
        seed=seed,
        status=status,
        error=error,
    )

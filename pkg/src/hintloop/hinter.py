"""Hint generation and distillation export.

Oracle hint sequences are produced one hint at a time, each call conditioned
on the problem, the reference solution (or, for answer-only problems, the
final answer) and the hints accepted so far; the model signals completion
with a stop sentinel. Every candidate hint is screened for answer leakage:
a leaking hint is regenerated once with the leaked evidence quoted back, and
dropped if it still leaks.

The training export serializes one (problem statement, reasoning state,
target hint) triple per hint, with reasoning states cut from the reference
solution by a pluggable decomposer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .backend import ROLE_SYSTEM, ROLE_USER, CallUsage, transcript
from .dataset import Hint, HintSequence, Problem, TrainingInstance
from .normalize import normalize_answer
from .templates import PromptTemplate, default_template

logger = logging.getLogger(__name__)

STOP_SENTINEL = "NO MORE HINTS"

RULE_EXACT = "exact_answer_match"
RULE_NORMALIZED = "normalized_answer_match"
RULE_NONE = "none"

# boundary characters that may legitimately surround a short numeral; math
# operator characters (^ _ + - * / =) are deliberately absent so that e.g.
# answer "2" does not fire on "x^2" or "1/2"
_STRICT_BOUNDARY = set(" \t\n\r.,;:!?()[]\"'") | {""}


class HintGenerationError(Exception):
    pass


class NoUsableHintsError(HintGenerationError):
    """Every generated hint leaked the answer or the oracle gave none."""


@dataclass(frozen=True)
class LeakageVerdict:
    leaked: bool
    evidence: str | None = None
    rule: str = RULE_NONE

    def __post_init__(self) -> None:
        if self.leaked != (self.evidence is not None):
            raise ValueError("leaked verdicts carry evidence; clean ones do not")


def check_leakage(hint_text: str, ground_truth_answer: str) -> LeakageVerdict:
    """Decide whether a hint reveals the final answer.

    A hint leaks when the answer occurs as a token-bounded substring, either
    verbatim or after both sides are normalized. Numeric answers of at most
    two characters additionally require word-like boundaries, so short
    numerals embedded in expressions ("x^2", "42.5") do not count.
    """
    raw_answer = ground_truth_answer.strip()
    if not raw_answer:
        raise ValueError("ground-truth answer must be non-empty")
    if _bounded_occurrence(hint_text, raw_answer):
        return LeakageVerdict(True, raw_answer, RULE_EXACT)
    norm_answer = normalize_answer(ground_truth_answer)
    if norm_answer and _bounded_occurrence(normalize_answer(hint_text), norm_answer):
        return LeakageVerdict(True, norm_answer, RULE_NORMALIZED)
    return LeakageVerdict(False)


def _bounded_occurrence(haystack: str, needle: str) -> bool:
    strict = needle.isdigit() and len(needle) <= 2
    start = 0
    while True:
        i = haystack.find(needle, start)
        if i < 0:
            return False
        before = haystack[i - 1] if i > 0 else ""
        after_idx = i + len(needle)
        after = haystack[after_idx] if after_idx < len(haystack) else ""
        ok = not before.isalnum() and not after.isalnum()
        if ok and strict:
            ok = before in _STRICT_BOUNDARY and after in _STRICT_BOUNDARY
            # a short numeral inside a decimal ("3.42", "42.5") is not the answer
            if ok and before == "." and i >= 2 and haystack[i - 2].isdigit():
                ok = False
            if ok and after == "." and haystack[after_idx + 1: after_idx + 2].isdigit():
                ok = False
        if ok:
            return True
        start = i + 1


def _format_prior_hints(hints: Sequence[Hint]) -> str:
    if not hints:
        return "(none yet)"
    return "\n".join(f"{h.index}. {h.text}" for h in hints)


def generate_oracle_hints(
    problem: Problem,
    backend,
    template: PromptTemplate | None = None,
    max_hints: int = 16,
    generator_model: str = "",
    created_at: str | None = None,
    call_log: list[CallUsage] | None = None,
    provenance: str = "oracle_llm",
) -> HintSequence:
    """Generate an ordered hint sequence for one problem.

    Returns a sequence with 1 <= T <= max_hints hints, each leakage-checked.
    Raises NoUsableHintsError when nothing survives.
    """
    if max_hints < 1:
        raise ValueError("max_hints must be >= 1")
    if not problem.eligible_for_hints:
        raise HintGenerationError(
            f"problem {problem.id!r} has neither a reference solution nor an answer"
        )
    if problem.reference_solution is not None:
        reference = problem.reference_solution
        template = template or default_template("oracle_from_solution")
    else:
        reference = problem.ground_truth_answer or ""
        template = template or default_template("oracle_from_answer")

    accepted: list[Hint] = []
    for _round in range(max_hints):
        user = template.render(
            statement=problem.statement,
            solution_or_answer=reference,
            prior_hints=_format_prior_hints(accepted),
        )
        text, usage = backend.complete(
            transcript((ROLE_SYSTEM, template.system_text), (ROLE_USER, user))
        )
        if call_log is not None:
            call_log.append(usage)
        text = text.strip()
        if not text or text.upper().startswith(STOP_SENTINEL):
            break
        text, dropped = _screen_hint(problem, backend, template.system_text, user, text, call_log)
        if dropped:
            continue
        accepted.append(Hint(index=len(accepted) + 1, text=text, provenance=provenance))
    if not accepted:
        raise NoUsableHintsError(f"no usable hints for problem {problem.id!r}")
    return HintSequence(
        problem_id=problem.id,
        hints=accepted,
        generator_model=generator_model or getattr(backend, "model_name", ""),
        created_at=created_at,
    )


def _screen_hint(problem: Problem, backend, system_text: str, user: str, text: str,
                 call_log: list[CallUsage] | None) -> tuple[str, bool]:
    """Leakage-check one candidate; returns (text, dropped)."""
    if problem.ground_truth_answer is None:
        return text, False
    verdict = check_leakage(text, problem.ground_truth_answer)
    if not verdict.leaked:
        return text, False
    logger.warning(
        "problem %s: hint leaked the answer (%s via %s); regenerating once",
        problem.id, verdict.evidence, verdict.rule,
    )
    retry_user = (
        user
        + f"\n\nYour previous hint revealed the answer (it contained {verdict.evidence!r})."
        + " Rewrite the hint without revealing the final answer."
    )
    text, usage = backend.complete(
        transcript((ROLE_SYSTEM, system_text), (ROLE_USER, retry_user))
    )
    if call_log is not None:
        call_log.append(usage)
    text = text.strip()
    verdict = check_leakage(text, problem.ground_truth_answer) if text else LeakageVerdict(False)
    if not text or verdict.leaked:
        logger.warning("problem %s: regenerated hint still leaks; dropping it", problem.id)
        return text, True
    return text, False


EMPTY_STATE_PLACEHOLDER = "(no work yet)"


def render_step_user(statement: str, reasoning_state: str,
                     template: PromptTemplate | None = None) -> str:
    template = template or default_template("step_hint")
    return template.render(
        statement=statement,
        reasoning_state=reasoning_state if reasoning_state else EMPTY_STATE_PLACEHOLDER,
    )


def serialize_step_prompt(statement: str, reasoning_state: str) -> str:
    """Flat prompt form of a step-hint request.

    This exact serialization is the training-time prompt for the distilled
    hinter (system text, blank line, rendered user text, blank line; the
    hint text follows as the completion). Training and inference must agree
    on it byte for byte.
    """
    template = default_template("step_hint")
    return (template.system_text + "\n\n"
            + render_step_user(statement, reasoning_state, template) + "\n\n")


def generate_step_hint(
    problem: Problem,
    state,
    backend,
    template: PromptTemplate | None = None,
    provenance: str = "distilled_slm",
    call_log: list[CallUsage] | None = None,
) -> Hint:
    """Generate the next hint from the problem and the accumulated work.

    This is the distilled hinter's inference interface: it conditions only on
    the statement and the solver's current reasoning state. If the hint still
    leaks after one retry it is returned with ``leaked=True`` so the caller
    can decide what to do with it.
    """
    if state.problem_id != problem.id:
        raise HintGenerationError(
            f"reasoning state belongs to {state.problem_id!r}, not {problem.id!r}"
        )
    template = template or default_template("step_hint")
    user = render_step_user(problem.statement, state.text, template)
    text, usage = backend.complete(
        transcript((ROLE_SYSTEM, template.system_text), (ROLE_USER, user))
    )
    if call_log is not None:
        call_log.append(usage)
    text = text.strip()
    leaked = False
    if problem.ground_truth_answer is not None and text:
        verdict = check_leakage(text, problem.ground_truth_answer)
        if verdict.leaked:
            logger.warning(
                "problem %s: step hint leaked the answer (%s); regenerating once",
                problem.id, verdict.evidence,
            )
            retry_user = (
                user
                + f"\n\nYour previous hint revealed the answer (it contained "
                  f"{verdict.evidence!r}). Rewrite it without revealing the final answer."
            )
            text, usage = backend.complete(
                transcript((ROLE_SYSTEM, template.system_text), (ROLE_USER, retry_user))
            )
            if call_log is not None:
                call_log.append(usage)
            text = text.strip()
            leaked = bool(text) and check_leakage(text, problem.ground_truth_answer).leaked
    if not text:
        raise HintGenerationError(f"backend returned an empty hint for {problem.id!r}")
    return Hint(index=state.step + 1, text=text, provenance=provenance, leaked=leaked)


def decompose_solution(solution: str, count: int) -> list[str]:
    """Cut a reference solution into exactly ``count`` ordered segments.

    Paragraphs (blank-line separated) are the starting point; adjacent short
    paragraphs are merged or long ones split at whitespace until the segment
    count matches. Raises ValueError when the text cannot be stretched that
    far (fewer whitespace-separated tokens than segments needed).
    """
    if count < 1:
        raise ValueError("segment count must be >= 1")
    paragraphs = [p.strip() for p in solution.split("\n\n") if p.strip()]
    if not paragraphs:
        raise ValueError("reference solution is empty")
    while len(paragraphs) > count:
        # merge the adjacent pair with the smallest combined length
        best = min(
            range(len(paragraphs) - 1),
            key=lambda i: len(paragraphs[i]) + len(paragraphs[i + 1]),
        )
        paragraphs[best: best + 2] = [paragraphs[best] + "\n\n" + paragraphs[best + 1]]
    while len(paragraphs) < count:
        # split the longest segment at the whitespace gap nearest its middle
        longest = max(range(len(paragraphs)), key=lambda i: len(paragraphs[i]))
        left, right = _split_near_middle(paragraphs[longest])
        if right is None:
            raise ValueError(
                f"cannot decompose solution into {count} segments: "
                f"segment {longest + 1} has no splittable whitespace"
            )
        paragraphs[longest: longest + 1] = [left, right]
    return paragraphs


def _split_near_middle(text: str) -> tuple[str, str | None]:
    middle = len(text) // 2
    gaps = [i for i, ch in enumerate(text) if ch.isspace()]
    gaps = [i for i in gaps if 0 < i < len(text) - 1]
    if not gaps:
        return text, None
    cut = min(gaps, key=lambda i: abs(i - middle))
    left, right = text[:cut].strip(), text[cut:].strip()
    if not left or not right:
        return text, None
    return left, right


def reasoning_prefixes(solution: str, count: int) -> list[str]:
    """Cumulative reasoning states W_1..W_count; W_1 is always empty."""
    segments = decompose_solution(solution, count)
    prefixes = []
    for t in range(count):
        prefixes.append("\n\n".join(segments[:t]))
    return prefixes


StateDecomposer = Callable[[str, int], list[str]]


def export_training_instances(
    problems: Iterable[Problem],
    hint_sequences: Iterable[HintSequence],
    state_decomposer: StateDecomposer | None = None,
) -> tuple[list[TrainingInstance], list[str]]:
    """Serialize (statement, reasoning state, target hint) triples.

    One instance per (problem, step), ordered by (problem_id, step_index).
    Problems that cannot be exported (missing reference solution, misaligned
    decomposition, a hint that leaks the answer) are reported in the returned
    error list; the rest are still exported. Pure: identical inputs produce
    identical output.
    """
    decomposer = state_decomposer or reasoning_prefixes
    by_id = {p.id: p for p in problems}
    instances: list[TrainingInstance] = []
    errors: list[str] = []
    for sequence in sorted(hint_sequences, key=lambda s: s.problem_id):
        problem = by_id.get(sequence.problem_id)
        if problem is None:
            errors.append(f"{sequence.problem_id}: hint sequence references an unknown problem")
            continue
        if problem.reference_solution is None:
            errors.append(f"{problem.id}: no reference solution to decompose")
            continue
        count = len(sequence)
        if count == 0:
            errors.append(f"{problem.id}: empty hint sequence")
            continue
        if problem.ground_truth_answer is not None:
            leaking = [
                h.index for h in sequence.hints
                if check_leakage(h.text, problem.ground_truth_answer).leaked
            ]
            if leaking:
                errors.append(f"{problem.id}: hints {leaking} leak the final answer")
                continue
        try:
            prefixes = decomposer(problem.reference_solution, count)
        except ValueError as exc:
            errors.append(f"{problem.id}: {exc}")
            continue
        if len(prefixes) != count:
            errors.append(
                f"{problem.id}: decomposer produced {len(prefixes)} states for {count} hints"
            )
            continue
        for hint, state in zip(sequence.hints, prefixes):
            instances.append(
                TrainingInstance(
                    problem_id=problem.id,
                    step_index=hint.index,
                    problem_statement=problem.statement,
                    reasoning_state=state,
                    target_hint=hint.text,
                )
            )
    instances.sort(key=lambda i: (i.problem_id, i.step_index))
    return instances, errors

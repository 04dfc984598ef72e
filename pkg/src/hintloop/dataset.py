"""Domain records and the JSONL on-disk format.

Four line-oriented schemas share one loader/saver pair. Field names are part
of the contract:

  problems:  {"id", "statement", "dataset_name", "reference_solution"?,
              "ground_truth_answer"?, "ground_truth_normalized"?, "tags"?}
  hints:     {"problem_id", "generator_model", "hints": [{"index", "text",
              "provenance"}], "created_at"?}
  training:  {"problem_id", "step_index", "problem_statement",
              "reasoning_state", "target_hint"}
  runs:      one solve attempt per line, see RunRecord

Collections are validated on load and immutable by convention afterwards;
load(save(x)) reproduces x field-for-field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .backend import CallUsage
from .normalize import normalize_answer

PROVENANCES = ("oracle_llm", "distilled_slm", "nft_slm", "human_edited")

MODE_NO_HINT = "no_hint"
MODE_HINTED = "hinted"
MODE_SELF_CONSISTENCY = "self_consistency"
MODES = (MODE_NO_HINT, MODE_HINTED, MODE_SELF_CONSISTENCY)

HINT_SOURCES = ("llm", "ft_slm", "nft_slm")

STATUS_OK = "ok"
STATUS_ABORTED = "aborted"


class DatasetError(Exception):
    """Base for dataset ingestion failures."""


class ParseError(DatasetError):
    """A line was not a well-formed JSON object."""


class ValidationError(DatasetError):
    """A record violated an invariant."""


class DuplicateIdError(ValidationError):
    """Two records share a key that must be unique within the file."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


@dataclass
class Problem:
    """One math task, optionally with a reference solution and/or answer."""

    id: str
    statement: str
    dataset_name: str
    reference_solution: str | None = None
    ground_truth_answer: str | None = None
    ground_truth_normalized: str | None = None
    tags: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        _require(bool(self.id), "problem id must be non-empty")
        _require(bool(self.statement), f"problem {self.id!r}: statement must be non-empty")
        if self.ground_truth_answer is not None and self.ground_truth_normalized is None:
            self.ground_truth_normalized = normalize_answer(self.ground_truth_answer)

    @property
    def eligible_for_hints(self) -> bool:
        """Hint generation needs a solution or at least the final answer."""
        return self.reference_solution is not None or self.ground_truth_answer is not None

    def to_dict(self) -> dict:
        d: dict = {"id": self.id, "statement": self.statement, "dataset_name": self.dataset_name}
        if self.reference_solution is not None:
            d["reference_solution"] = self.reference_solution
        if self.ground_truth_answer is not None:
            d["ground_truth_answer"] = self.ground_truth_answer
        if self.ground_truth_normalized is not None:
            d["ground_truth_normalized"] = self.ground_truth_normalized
        if self.tags:
            d["tags"] = list(self.tags)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Problem":
        return cls(
            id=_req_str(d, "id"),
            statement=_req_str(d, "statement"),
            dataset_name=_req_str(d, "dataset_name"),
            reference_solution=_opt_str(d, "reference_solution"),
            ground_truth_answer=_opt_str(d, "ground_truth_answer"),
            ground_truth_normalized=_opt_str(d, "ground_truth_normalized"),
            tags=list(d.get("tags") or []),
        )


@dataclass
class Hint:
    """One instructional hint inside an ordered sequence (index is 1-based)."""

    index: int
    text: str
    provenance: str
    # set when a generated hint still leaks the answer after one retry; the
    # flag is advisory and intentionally excluded from equality/serialization
    leaked: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        _require(self.index >= 1, f"hint index must be >= 1, got {self.index}")
        _require(bool(self.text), "hint text must be non-empty")
        _require(
            self.provenance in PROVENANCES,
            f"unknown provenance {self.provenance!r}; expected one of {PROVENANCES}",
        )

    def to_dict(self) -> dict:
        return {"index": self.index, "text": self.text, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> "Hint":
        return cls(index=_req_int(d, "index"), text=_req_str(d, "text"),
                   provenance=_req_str(d, "provenance"))


@dataclass
class HintSequence:
    """Ordered hints for one problem; indices must be exactly 1..T."""

    problem_id: str
    hints: list[Hint]
    generator_model: str = ""
    created_at: str | None = None

    def __post_init__(self) -> None:
        _require(bool(self.problem_id), "hint sequence needs a problem_id")
        indices = [h.index for h in self.hints]
        expected = list(range(1, len(self.hints) + 1))
        if indices != expected:
            missing = sorted(set(expected) - set(indices))
            raise ValidationError(
                f"hint indices for {self.problem_id!r} must be 1..{len(self.hints)} "
                f"with no gaps; got {indices}"
                + (f" (missing {missing})" if missing else "")
            )

    def __len__(self) -> int:
        return len(self.hints)

    def to_dict(self) -> dict:
        d: dict = {
            "problem_id": self.problem_id,
            "generator_model": self.generator_model,
            "hints": [h.to_dict() for h in self.hints],
        }
        if self.created_at is not None:
            d["created_at"] = self.created_at
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HintSequence":
        hints_raw = d.get("hints")
        if not isinstance(hints_raw, list):
            raise ValidationError("'hints' must be a list")
        return cls(
            problem_id=_req_str(d, "problem_id"),
            hints=[Hint.from_dict(h) for h in hints_raw],
            generator_model=str(d.get("generator_model", "")),
            created_at=_opt_str(d, "created_at"),
        )


@dataclass
class TrainingInstance:
    """One (problem statement, reasoning state, target hint) triple."""

    problem_id: str
    step_index: int
    problem_statement: str
    reasoning_state: str
    target_hint: str

    def __post_init__(self) -> None:
        _require(bool(self.problem_id), "training instance needs a problem_id")
        _require(self.step_index >= 1, f"step_index must be >= 1, got {self.step_index}")
        _require(bool(self.problem_statement), "problem_statement must be non-empty")
        _require(bool(self.target_hint), "target_hint must be non-empty")

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "step_index": self.step_index,
            "problem_statement": self.problem_statement,
            "reasoning_state": self.reasoning_state,
            "target_hint": self.target_hint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingInstance":
        return cls(
            problem_id=_req_str(d, "problem_id"),
            step_index=_req_int(d, "step_index"),
            problem_statement=_req_str(d, "problem_statement"),
            reasoning_state=str(d.get("reasoning_state", "")),
            target_hint=_req_str(d, "target_hint"),
        )


@dataclass
class RunRecord:
    """One solve attempt with full call accounting.

    Call-count law (status "ok"): hinted runs make hints_used + 1 calls,
    no-hint runs make exactly 1, self-consistency runs make one per
    effective sample. Token totals always equal the per-call sums.
    """

    run_id: str
    problem_id: str
    mode: str
    hint_source: str | None
    hints_used: int
    samples: int
    samples_effective: int
    final_answer_raw: str
    final_answer_normalized: str
    reasoning_summary: str
    per_call_usage: list[CallUsage]
    total_prompt_tokens: int
    total_completion_tokens: int
    wall_time: float
    seed: int
    status: str = STATUS_OK
    error: str | None = None
    verdict: str | None = None

    def __post_init__(self) -> None:
        _require(self.mode in MODES, f"unknown mode {self.mode!r}")
        _require(
            self.hint_source is None or self.hint_source in HINT_SOURCES,
            f"unknown hint_source {self.hint_source!r}",
        )
        _require(self.status in (STATUS_OK, STATUS_ABORTED), f"unknown status {self.status!r}")
        prompt_sum = sum(u.prompt_tokens for u in self.per_call_usage)
        completion_sum = sum(u.completion_tokens for u in self.per_call_usage)
        _require(
            self.total_prompt_tokens == prompt_sum
            and self.total_completion_tokens == completion_sum,
            f"run {self.run_id!r}: token totals must equal the per-call sums",
        )
        if self.status == STATUS_OK:
            calls = len(self.per_call_usage)
            if self.mode == MODE_HINTED:
                _require(calls == self.hints_used + 1,
                         f"run {self.run_id!r}: hinted runs make T+1 calls, got {calls}")
            elif self.mode == MODE_NO_HINT:
                _require(calls == 1,
                         f"run {self.run_id!r}: no-hint runs make 1 call, got {calls}")
                _require(self.hints_used == 0, f"run {self.run_id!r}: no-hint runs use 0 hints")
            else:
                _require(calls == self.samples_effective,
                         f"run {self.run_id!r}: self-consistency runs make one call per "
                         f"effective sample, got {calls}")

    @property
    def total_tokens(self) -> int:
        return self.total_prompt_tokens + self.total_completion_tokens

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "problem_id": self.problem_id,
            "mode": self.mode,
            "hint_source": self.hint_source,
            "hints_used": self.hints_used,
            "samples": self.samples,
            "samples_effective": self.samples_effective,
            "final_answer_raw": self.final_answer_raw,
            "final_answer_normalized": self.final_answer_normalized,
            "reasoning_summary": self.reasoning_summary,
            "per_call_usage": [u.to_dict() for u in self.per_call_usage],
            "total_prompt_tokens": self.total_prompt_tokens,
            "total_completion_tokens": self.total_completion_tokens,
            "wall_time": self.wall_time,
            "seed": self.seed,
            "status": self.status,
            "error": self.error,
            "verdict": self.verdict,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        usage_raw = d.get("per_call_usage")
        if not isinstance(usage_raw, list):
            raise ValidationError("'per_call_usage' must be a list")
        return cls(
            run_id=_req_str(d, "run_id"),
            problem_id=_req_str(d, "problem_id"),
            mode=_req_str(d, "mode"),
            hint_source=_opt_str(d, "hint_source"),
            hints_used=_req_int(d, "hints_used"),
            samples=_req_int(d, "samples"),
            samples_effective=_req_int(d, "samples_effective"),
            final_answer_raw=str(d.get("final_answer_raw", "")),
            final_answer_normalized=str(d.get("final_answer_normalized", "")),
            reasoning_summary=str(d.get("reasoning_summary", "")),
            per_call_usage=[CallUsage.from_dict(u) for u in usage_raw],
            total_prompt_tokens=_req_int(d, "total_prompt_tokens"),
            total_completion_tokens=_req_int(d, "total_completion_tokens"),
            wall_time=float(d.get("wall_time", 0.0)),
            seed=_req_int(d, "seed"),
            status=str(d.get("status", STATUS_OK)),
            error=_opt_str(d, "error"),
            verdict=_opt_str(d, "verdict"),
        )


_SCHEMAS = {
    "problems": Problem,
    "hints": HintSequence,
    "training": TrainingInstance,
    "runs": RunRecord,
}

# key function per schema for duplicate detection; None -> duplicates allowed
_UNIQUE_KEYS = {
    "problems": lambda r: r.id,
    "hints": lambda r: r.problem_id,
    "training": lambda r: (r.problem_id, r.step_index),
    "runs": lambda r: r.run_id,
}


def load_dataset(path: str | Path, schema: str) -> list:
    """Load and validate one JSONL file.

    Every malformed line produces a diagnostic naming the file and line,
    never a bare crash. Duplicate keys (per schema) are rejected.
    """
    if schema not in _SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {sorted(_SCHEMAS)}")
    path = Path(path)
    record_type = _SCHEMAS[schema]
    key_of = _UNIQUE_KEYS[schema]
    records = []
    seen: dict = {}
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{lineno}: expected a JSON object")
            try:
                record = record_type.from_dict(obj)
            except (DatasetError, TypeError, KeyError, ValueError, AttributeError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            key = key_of(record)
            if key in seen:
                raise DuplicateIdError(
                    f"{path}:{lineno}: duplicate key {key!r} (first seen on line {seen[key]})"
                )
            seen[key] = lineno
            records.append(record)
    return records


def save_dataset(collection: Iterable, path: str | Path) -> None:
    """Write records as JSONL (UTF-8, one compact object per line)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for record in collection:
            f.write(dumps_record(record) + "\n")


def dumps_record(record) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False, separators=(", ", ": "))


def index_by_id(problems: Sequence[Problem]) -> dict[str, Problem]:
    return {p.id: p for p in problems}


def _req_str(d: dict, key: str) -> str:
    if key not in d:
        raise ValidationError(f"missing required field {key!r}")
    value = d[key]
    if not isinstance(value, str):
        raise ValidationError(f"field {key!r} must be a string, got {type(value).__name__}")
    return value


def _opt_str(d: dict, key: str) -> str | None:
    value = d.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise ValidationError(f"field {key!r} must be a string, got {type(value).__name__}")
    return value


def _req_int(d: dict, key: str) -> int:
    if key not in d:
        raise ValidationError(f"missing required field {key!r}")
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"field {key!r} must be an integer, got {type(value).__name__}")
    return value

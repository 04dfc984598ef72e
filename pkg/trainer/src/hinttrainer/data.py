"""Training data: the hint-distillation JSONL and its prompt serialization.

The upstream pipeline exports one instance per line:

    {"problem_id", "step_index", "problem_statement", "reasoning_state",
     "target_hint"}

The prompt rendered here must match the exporter's serialization byte for
byte (same template file, same empty-state placeholder); the fixture test
cross-checks that. The model is trained to continue the prompt with the
target hint, so the hint tokens are the only supervised positions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

EMPTY_STATE_PLACEHOLDER = "(no work yet)"


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class HintInstance:
    problem_id: str
    step_index: int
    problem_statement: str
    reasoning_state: str
    target_hint: str


def load_instances(path: str | Path) -> list[HintInstance]:
    path = Path(path)
    required = ("problem_id", "step_index", "problem_statement",
                "reasoning_state", "target_hint")
    out = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            missing = [k for k in required if k not in obj]
            if missing:
                raise DataError(f"{path}:{lineno}: missing fields {missing}")
            if not obj["target_hint"]:
                raise DataError(f"{path}:{lineno}: empty target_hint")
            if int(obj["step_index"]) < 1:
                raise DataError(f"{path}:{lineno}: step_index must be >= 1")
            out.append(HintInstance(
                problem_id=str(obj["problem_id"]),
                step_index=int(obj["step_index"]),
                problem_statement=str(obj["problem_statement"]),
                reasoning_state=str(obj["reasoning_state"]),
                target_hint=str(obj["target_hint"]),
            ))
    if not out:
        raise DataError(f"{path}: no training instances found")
    return out


def _template_sections(raw: str) -> tuple[str, str]:
    section = None
    parts = {"system": [], "user": []}
    for line in raw.splitlines():
        stripped = line.strip()
        if stripped == "[system]":
            section = "system"
            continue
        if stripped == "[user]":
            section = "user"
            continue
        if section is not None:
            parts[section].append(line)
    if section is None:
        raise DataError("template has no [system]/[user] sections")
    return "\n".join(parts["system"]).strip(), "\n".join(parts["user"]).strip()


def _default_template_text() -> str:
    return (resources.files("hinttrainer") / "prompts" / "step_hint.txt").read_text("utf-8")


def serialize_prompt(statement: str, reasoning_state: str,
                     template_text: str | None = None) -> str:
    """System text, blank line, filled user text, blank line; hint follows."""
    system, user = _template_sections(template_text or _default_template_text())
    state = reasoning_state if reasoning_state else EMPTY_STATE_PLACEHOLDER
    user = user.replace("{statement}", statement).replace("{reasoning_state}", state)
    return system + "\n\n" + user + "\n\n"


def serialize_instance(instance: HintInstance,
                       template_text: str | None = None) -> tuple[str, str]:
    """(prompt, target) pair for one instance."""
    prompt = serialize_prompt(instance.problem_statement, instance.reasoning_state,
                              template_text)
    return prompt, instance.target_hint


def split_by_problem(instances: Sequence[HintInstance], validation_split: float,
                     seed: int) -> tuple[list[HintInstance], list[HintInstance]]:
    """Train/validation split on whole problems.

    Splitting by problem_id rather than by instance keeps all steps of one
    problem on the same side, so validation never sees a problem it trained
    on at another step.
    """
    import random

    problem_ids = sorted({i.problem_id for i in instances})
    if validation_split <= 0.0 or len(problem_ids) < 2:
        return list(instances), []
    rng = random.Random(seed)
    shuffled = list(problem_ids)
    rng.shuffle(shuffled)
    n_val = max(1, round(len(problem_ids) * validation_split))
    n_val = min(n_val, len(problem_ids) - 1)  # never empty the training side
    val_ids = set(shuffled[:n_val])
    train = [i for i in instances if i.problem_id not in val_ids]
    val = [i for i in instances if i.problem_id in val_ids]
    return train, val

"""Prompt templates with named placeholders.

Templates live in editable UTF-8 files with two sections::

    [system]
    ...system text...
    [user]
    ...user text with {placeholders}...

Placeholders are literal ``{name}`` tokens replaced verbatim; all other
braces (LaTeX etc.) pass through untouched. A template declares which
placeholders it requires, and each required placeholder must appear exactly
once in the user text.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

PLACEHOLDER_STATEMENT = "statement"
PLACEHOLDER_SOLUTION_OR_ANSWER = "solution_or_answer"
PLACEHOLDER_REASONING_STATE = "reasoning_state"
PLACEHOLDER_PRIOR_HINTS = "prior_hints"

ORACLE_PLACEHOLDERS = (
    PLACEHOLDER_STATEMENT,
    PLACEHOLDER_SOLUTION_OR_ANSWER,
    PLACEHOLDER_PRIOR_HINTS,
)
STEP_HINT_PLACEHOLDERS = (PLACEHOLDER_STATEMENT, PLACEHOLDER_REASONING_STATE)
JUDGE_PLACEHOLDERS = ("statement", "ground_truth", "final_answer", "reasoning_summary")

_DEFAULT_REQUIRES = {
    "oracle_from_solution": ORACLE_PLACEHOLDERS,
    "oracle_from_answer": ORACLE_PLACEHOLDERS,
    "step_hint": STEP_HINT_PLACEHOLDERS,
    "solver_refine": (),
    "synthesize_from_state": (PLACEHOLDER_REASONING_STATE,),
    "synthesize_direct": (PLACEHOLDER_STATEMENT,),
    "judge": JUDGE_PLACEHOLDERS,
}


class TemplateError(Exception):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system_text: str
    user_text: str
    requires: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for placeholder in self.requires:
            token = "{%s}" % placeholder
            count = self.user_text.count(token)
            if count != 1:
                raise TemplateError(
                    f"template {self.name!r}: placeholder {token} must appear "
                    f"exactly once in the user text, found {count}"
                )

    def render(self, **values: str) -> str:
        """Fill the user text; every required placeholder must be supplied."""
        missing = [p for p in self.requires if p not in values]
        if missing:
            raise TemplateError(f"template {self.name!r}: missing values for {missing}")
        text = self.user_text
        for key, value in values.items():
            text = text.replace("{%s}" % key, value)
        return text


def parse_template_text(name: str, raw: str, requires: tuple[str, ...] = ()) -> PromptTemplate:
    section = None
    parts: dict[str, list[str]] = {"system": [], "user": []}
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
        raise TemplateError(f"template {name!r}: no [system]/[user] sections found")
    return PromptTemplate(
        name=name,
        system_text="\n".join(parts["system"]).strip(),
        user_text="\n".join(parts["user"]).strip(),
        requires=requires,
    )


def load_template(path: str | Path, name: str | None = None,
                  requires: tuple[str, ...] | None = None) -> PromptTemplate:
    path = Path(path)
    name = name or path.stem
    if requires is None:
        requires = _DEFAULT_REQUIRES.get(name, ())
    return parse_template_text(name, path.read_text(encoding="utf-8"), requires)


def default_template(name: str) -> PromptTemplate:
    """Load one of the templates shipped with the package."""
    if name not in _DEFAULT_REQUIRES:
        raise TemplateError(f"no default template named {name!r}")
    raw = (resources.files("hintloop") / "prompts" / f"{name}.txt").read_text("utf-8")
    return parse_template_text(name, raw, _DEFAULT_REQUIRES[name])

"""Canonical form for final answers.

The normal form is purely syntactic: it strips presentation wrappers so that
string equality can stand in for "same written answer". It never evaluates
math, so "0.5" and "1/2" stay distinct (semantic equivalence is the judge's
job).

Rules applied, in order, until a fixpoint is reached:
  - strip outer whitespace
  - drop "$" math delimiters and "\\left" / "\\right"
  - unwrap "\\boxed{...}"
  - rewrite "\\frac{a}{b}" (and \\dfrac, \\tfrac) as "a/b"
  - strip outer quotes and redundant outer braces
  - drop thousands separators ("1,000" -> "1000")
  - drop trailing ".0" on integer tokens ("7.0" -> "7")
  - lower-case and collapse internal whitespace
"""

from __future__ import annotations

import re

_FRAC = re.compile(r"\\[dt]?frac\s*\{([^{}]*)\}\s*\{([^{}]*)\}")
_THOUSANDS = re.compile(r"(?<=\d),(?=\d{3}(?!\d))")
_TRAILING_POINT_ZERO = re.compile(r"(?<!\d)(\d+)\.0+(?!\d)")
_WS = re.compile(r"\s+")

_MAX_PASSES = 8


def normalize_answer(raw: str) -> str:
    """Return the canonical form of a raw final answer. Total and idempotent."""
    s = raw
    for _ in range(_MAX_PASSES):
        out = _normalize_once(s)
        if out == s:
            break
        s = out
    return s


def _normalize_once(s: str) -> str:
    s = s.strip()
    s = s.replace("$", "")
    s = s.replace("\\left", "").replace("\\right", "")
    s = _unwrap_boxed(s)
    while True:
        rewritten = _FRAC.sub(r"\1/\2", s)
        if rewritten == s:
            break
        s = rewritten
    s = _strip_outer(s)
    s = _THOUSANDS.sub("", s)
    s = _TRAILING_POINT_ZERO.sub(r"\1", s)
    s = s.lower()
    s = _WS.sub(" ", s)
    return s.strip()


def _unwrap_boxed(s: str) -> str:
    while True:
        start = s.find("\\boxed")
        if start < 0:
            return s
        brace = start + len("\\boxed")
        while brace < len(s) and s[brace].isspace():
            brace += 1
        if brace >= len(s) or s[brace] != "{":
            # malformed wrapper: drop the command token, keep the rest
            s = s[:start] + s[start + len("\\boxed"):]
            continue
        end = _matching_brace(s, brace)
        if end < 0:
            # unbalanced: drop "\boxed{" and carry on
            s = s[:start] + s[brace + 1:]
            continue
        s = s[:start] + s[brace + 1:end] + s[end + 1:]


def _matching_brace(s: str, open_idx: int) -> int:
    depth = 0
    for i in range(open_idx, len(s)):
        if s[i] == "{":
            depth += 1
        elif s[i] == "}":
            depth -= 1
            if depth == 0:
                return i
    return -1


def _strip_outer(s: str) -> str:
    while True:
        s = s.strip()
        if len(s) >= 2 and s[0] == "{" and s[-1] == "}" and _matching_brace(s, 0) == len(s) - 1:
            s = s[1:-1]
            continue
        if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'" and s[0] not in s[1:-1]:
            s = s[1:-1]
            continue
        return s

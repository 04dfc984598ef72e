import json
import random

import pytest

from hintloop.backend import MockBackend, ScriptEntry
from hintloop.dataset import Hint, HintSequence, Problem


def make_problem(pid="p1", statement="Compute 2+2.", dataset="toy",
                 solution=None, answer=None, tags=None):
    return Problem(
        id=pid,
        statement=statement,
        dataset_name=dataset,
        reference_solution=solution,
        ground_truth_answer=answer,
        tags=tags or [],
    )


def make_hints(pid, texts, provenance="oracle_llm"):
    return HintSequence(
        problem_id=pid,
        hints=[Hint(index=i + 1, text=t, provenance=provenance) for i, t in enumerate(texts)],
        generator_model="mock",
    )


def synthesis_reply(answer, summary="done"):
    return json.dumps({"final_answer": answer, "reasoning_summary": summary})


def hinted_solve_script(states, answer, usage=(10, 5)):
    """Mock script for one hinted solve: T refinements then one synthesis."""
    entries = [ScriptEntry(response=s, prompt_tokens=usage[0], completion_tokens=usage[1])
               for s in states]
    entries.append(ScriptEntry(response=synthesis_reply(answer),
                               prompt_tokens=usage[0], completion_tokens=usage[1]))
    return entries


def oracle_script(hint_texts, usage=(30, 12), stop=True):
    """Mock script for oracle hint generation: hints then the stop sentinel."""
    entries = [ScriptEntry(response=t, prompt_tokens=usage[0], completion_tokens=usage[1])
               for t in hint_texts]
    if stop:
        entries.append(ScriptEntry(response="NO MORE HINTS",
                                   prompt_tokens=usage[0], completion_tokens=2))
    return entries


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


def latexish_strings(rng, count):
    """Seeded generator of LaTeX-flavoured answer strings for property tests."""
    atoms = [
        "x", "y", "n", "42", "1000", "3.14", "7.0", "1,000", "2,345,678", "0.5",
        "\\pi", "\\sqrt{2}", "√2", "π/4", "x^2", "a_1", "-5", "+3", "12 345",
        "\\frac{1}{2}", "\\frac{a+b}{c}", "\\dfrac{3}{4}", "\\tfrac{x}{y}",
        "\\boxed{9}", "\\boxed{\\frac{22}{7}}", "\\left(0, 1\\right)", "(1,2)",
        "[0, \\infty)", "{1, 2, 3}", "$18$", "$\\frac{5}{6}$", "ANSWER",
        "No real solutions", "x = 4", "", " ", "  ", "\t", "\n",
    ]
    wrappers = [
        lambda s: s,
        lambda s: f"$ {s} $",
        lambda s: f"\\boxed{{{s}}}",
        lambda s: f"{{{s}}}",
        lambda s: f'"{s}"',
        lambda s: f"  {s}  ",
        lambda s: f"\\left({s}\\right)",
        lambda s: f"{s}.0",
        lambda s: s.upper(),
    ]
    out = []
    for _ in range(count):
        parts = [rng.choice(atoms) for _ in range(rng.randint(1, 4))]
        s = rng.choice([" ", "", " + ", ", "]).join(parts)
        for _ in range(rng.randint(0, 3)):
            s = rng.choice(wrappers)(s)
        out.append(s)
    return out


def fresh_mock(script):
    return MockBackend(script)

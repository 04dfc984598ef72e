"""Aggregation of runs and verdicts into report quantities.

Single-run accuracy is 100 * correct / total. Multi-run stability is the
mean of per-run accuracies with the standard error computed from the sample
standard deviation (divisor R-1) over sqrt(R). Token reduction compares
average hint-generation tokens between two hinters. Everything here is a
pure function of its inputs; percentages are kept at full precision
internally and rounded to two decimals only for display.

Solver-side tokens (avg_tokens) and hinter-side tokens (avg_hint_tokens)
are reported in separate columns and never mixed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dataset import Problem, RunRecord
from .verify import OUTCOME_CORRECT, OUTCOME_PENDING, Verdict


class MetricsError(Exception):
    pass


@dataclass
class EvalReport:
    """One aggregated row: a (dataset, mode, hint_source) cell."""

    dataset_name: str
    mode: str
    hint_source: str | None
    n_problems: int
    n_correct: int
    accuracy: float
    runs: int = 1
    mean_accuracy: float | None = None
    std_error: float | None = None
    avg_wall_time: float = 0.0
    avg_total_tokens: float = 0.0
    avg_hint_tokens: float | None = None
    reduction_pct: float | None = None
    accuracy_drop_pending: float | None = None


def accuracy(verdicts: Sequence[Verdict],
             expected_problem_ids: Iterable[str] | None = None,
             drop_pending: bool = False) -> tuple[int, int, float]:
    """(n_correct, n_total, percentage) for one run's verdicts.

    Pending reviews never count as correct; by default they stay in the
    denominator (conservative), with ``drop_pending`` they leave it.
    """
    if expected_problem_ids is not None:
        missing = sorted(set(expected_problem_ids) - {v.problem_id for v in verdicts})
        if missing:
            raise MetricsError(f"missing verdicts for problems: {missing}")
    pool = [v for v in verdicts if not (drop_pending and v.outcome == OUTCOME_PENDING)]
    n_total = len(pool)
    n_correct = sum(1 for v in pool if v.outcome == OUTCOME_CORRECT)
    pct = 100.0 * n_correct / n_total if n_total else 0.0
    return n_correct, n_total, pct


def stability(per_run_accuracies: Sequence[float]) -> tuple[float, float | None]:
    """Mean and standard error over repeated runs.

    SE = sample standard deviation (divisor R-1) / sqrt(R); with a single
    run the SE is undefined and reported as None.
    """
    r = len(per_run_accuracies)
    if r == 0:
        raise MetricsError("stability needs at least one run")
    mean = sum(per_run_accuracies) / r
    if r == 1:
        return mean, None
    variance = sum((a - mean) ** 2 for a in per_run_accuracies) / (r - 1)
    return mean, math.sqrt(variance) / math.sqrt(r)


def token_reduction(llm_avg_tokens: float, slm_avg_tokens: float) -> float:
    """Percentage drop in average hint-generation tokens relative to the LLM."""
    if llm_avg_tokens <= 0:
        raise MetricsError("LLM average token count must be positive")
    return 100.0 * (llm_avg_tokens - slm_avg_tokens) / llm_avg_tokens


def efficiency_summary(runs: Sequence[RunRecord]) -> tuple[float, float]:
    """(average wall time in seconds, average total tokens) per problem."""
    if not runs:
        raise MetricsError("efficiency summary needs at least one run record")
    avg_time = sum(r.wall_time for r in runs) / len(runs)
    avg_tokens = sum(r.total_tokens for r in runs) / len(runs)
    return avg_time, avg_tokens


def build_reports(
    runs: Sequence[RunRecord],
    verdicts: Sequence[Verdict],
    problems: Sequence[Problem],
    hint_completion_tokens: Mapping[str, int] | None = None,
) -> list[EvalReport]:
    """Group runs into (dataset, mode, hint_source) rows.

    Repetitions are identified by distinct seeds within a group; accuracy is
    aggregated over all records of the group, and mean +/- SE over the
    per-seed accuracies when there is more than one seed. Aborted runs count
    as incorrect through their verdicts.
    """
    verdict_by_run = {v.run_id: v for v in verdicts}
    dataset_of = {p.id: p.dataset_name for p in problems}
    groups: dict[tuple[str, str, str | None], list[RunRecord]] = {}
    for record in runs:
        key = (dataset_of.get(record.problem_id, "unknown"), record.mode, record.hint_source)
        groups.setdefault(key, []).append(record)

    reports = []
    for (dataset_name, mode, hint_source), records in sorted(
        groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2] or "")
    ):
        group_verdicts = [verdict_by_run[r.run_id] for r in records if r.run_id in verdict_by_run]
        n_correct, n_total, pct = accuracy(group_verdicts)
        _, _, pct_drop = accuracy(group_verdicts, drop_pending=True)
        has_pending = any(v.outcome == OUTCOME_PENDING for v in group_verdicts)

        seeds = sorted({r.seed for r in records})
        mean = se = None
        if len(seeds) > 1:
            per_run = []
            for seed in seeds:
                seed_verdicts = [
                    verdict_by_run[r.run_id]
                    for r in records
                    if r.seed == seed and r.run_id in verdict_by_run
                ]
                per_run.append(accuracy(seed_verdicts)[2])
            mean, se = stability(per_run)

        avg_time, avg_tokens = efficiency_summary(records)
        avg_hint_tokens = None
        if hint_completion_tokens and mode == "hinted":
            per_problem = [
                hint_completion_tokens[r.problem_id]
                for r in records
                if r.problem_id in hint_completion_tokens
            ]
            if per_problem:
                avg_hint_tokens = sum(per_problem) / len(per_problem)

        reports.append(EvalReport(
            dataset_name=dataset_name,
            mode=mode,
            hint_source=hint_source,
            n_problems=len({r.problem_id for r in records}),
            n_correct=n_correct,
            accuracy=pct,
            runs=len(seeds),
            mean_accuracy=mean,
            std_error=se,
            avg_wall_time=avg_time,
            avg_total_tokens=avg_tokens,
            avg_hint_tokens=avg_hint_tokens,
            accuracy_drop_pending=pct_drop if has_pending else None,
        ))
    return reports


REPORT_COLUMNS = (
    "dataset", "mode", "hint_source", "n", "correct", "accuracy", "runs",
    "mean", "se", "avg_time_s", "avg_tokens", "avg_hint_tokens", "reduction_pct",
)


def _row_values(report: EvalReport, drop_pending: bool = False) -> list[str]:
    acc = report.accuracy
    if drop_pending and report.accuracy_drop_pending is not None:
        acc = report.accuracy_drop_pending
    return [
        report.dataset_name,
        report.mode,
        report.hint_source or "",
        str(report.n_problems),
        str(report.n_correct),
        _fmt2(acc),
        str(report.runs),
        _fmt2(report.mean_accuracy),
        _fmt2(report.std_error),
        _fmt2(report.avg_wall_time),
        _fmt2(report.avg_total_tokens),
        _fmt2(report.avg_hint_tokens),
        _fmt2(report.reduction_pct),
    ]


def _fmt2(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def render_report(reports: Sequence[EvalReport], fmt: str, drop_pending: bool = False) -> str:
    """Render rows deterministically as csv, json or a markdown table."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for report in reports:
            writer.writerow(_row_values(report, drop_pending))
        return buf.getvalue()
    if fmt == "json":
        rows = []
        for report in reports:
            rows.append({
                "dataset": report.dataset_name,
                "mode": report.mode,
                "hint_source": report.hint_source,
                "n": report.n_problems,
                "correct": report.n_correct,
                "accuracy": report.accuracy,
                "accuracy_drop_pending": report.accuracy_drop_pending,
                "runs": report.runs,
                "mean": report.mean_accuracy,
                "se": report.std_error,
                "avg_time_s": report.avg_wall_time,
                "avg_tokens": report.avg_total_tokens,
                "avg_hint_tokens": report.avg_hint_tokens,
                "reduction_pct": report.reduction_pct,
            })
        return json.dumps(rows, indent=2, ensure_ascii=False) + "\n"
    if fmt == "markdown_table":
        lines = [
            "| " + " | ".join(REPORT_COLUMNS) + " |",
            "|" + "|".join("---" for _ in REPORT_COLUMNS) + "|",
        ]
        for report in reports:
            lines.append("| " + " | ".join(_row_values(report, drop_pending)) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(reports: Sequence[EvalReport], fmt: str, path: str | Path,
                drop_pending: bool = False) -> None:
    Path(path).write_text(render_report(reports, fmt, drop_pending), encoding="utf-8")


def plot_points(runs: Sequence[RunRecord], verdicts: Sequence[Verdict]) -> list[tuple[int, float]]:
    """(hints_used, cumulative accuracy) pairs for hinted runs.

    Point h aggregates every hinted run that consumed at most h hints, so the
    curve shows how accuracy grows as more hints are allowed.
    """
    verdict_by_run = {v.run_id: v for v in verdicts}
    hinted = [r for r in runs if r.mode == "hinted" and r.run_id in verdict_by_run]
    points = []
    for h in sorted({r.hints_used for r in hinted}):
        pool = [r for r in hinted if r.hints_used <= h]
        correct = sum(
            1 for r in pool if verdict_by_run[r.run_id].outcome == OUTCOME_CORRECT
        )
        points.append((h, 100.0 * correct / len(pool)))
    return points


def emit_plot_points(runs: Sequence[RunRecord], verdicts: Sequence[Verdict],
                     path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("hints_used", "cumulative_accuracy"))
    for h, acc in plot_points(runs, verdicts):
        writer.writerow((h, f"{acc:.2f}"))
    Path(path).write_text(buf.getvalue(), encoding="utf-8")

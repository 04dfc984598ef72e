"""Command-line pipeline: gen-hints, export-training, solve, verify, report.

Commands couple only through files; each is idempotent on identical inputs
with mock backends. Exit codes are a stable contract: 0 success, 2 partial
(some problems skipped, details on stderr), 1 fatal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import hinter, metrics, solver, verify
from .backend import CallUsage
from .config import ConfigError, RunConfig
from .dataset import (
    MODE_HINTED,
    MODE_NO_HINT,
    MODE_SELF_CONSISTENCY,
    DatasetError,
    index_by_id,
    load_dataset,
    save_dataset,
)
from .templates import load_template

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2

_MODE_ALIASES = {
    "no_hint": MODE_NO_HINT,
    "hinted": MODE_HINTED,
    "sc": MODE_SELF_CONSISTENCY,
    "self_consistency": MODE_SELF_CONSISTENCY,
}

# which hinter family produced the hints -> provenance label on each hint
_PROVENANCE_BY_SOURCE = {
    "llm": "oracle_llm",
    "ft_slm": "distilled_slm",
    "nft_slm": "nft_slm",
}


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


def main(argv: list[str]) -> int:
    parser = _build_parser()
    args, extras = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_FATAL
    try:
        overrides = _parse_extras(extras)
        config = RunConfig.from_file(args.config, overrides) if args.config else RunConfig()
        _apply_flags(config, args)
        return _COMMANDS[args.command](config, args)
    except (ConfigError, DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hintloop",
        description="Hint-guided step-wise math solving pipeline",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command")
    for name, help_text in (
        ("gen-hints", "generate oracle hint sequences for every eligible problem"),
        ("export-training", "serialize (statement, state, hint) training triples"),
        ("solve", "run the configured solve mode over all problems"),
        ("verify", "turn runs into verdicts (exact match, judge when configured)"),
        ("report", "aggregate runs + verdicts into report files"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=False, help="YAML config file")
        p.add_argument("--mode", choices=sorted(_MODE_ALIASES), help="solve mode")
        p.add_argument("--hint-source", choices=("llm", "ft_slm", "nft_slm"))
        p.add_argument("--k", type=int, help="self-consistency sample count")
        p.add_argument("--runs", type=int, help="repetitions with consecutive seeds")
        p.add_argument("--seed", type=int)
        p.add_argument("--template", help="template file overriding the stage default")
        p.add_argument("--out", help="output directory (overrides paths.out_dir)")
        p.add_argument("--problems", help="problems.jsonl path (overrides paths.problems)")
        p.add_argument("--drop-pending", action="store_true",
                       help="also exclude pending reviews from accuracy denominators")
    return parser


def _parse_extras(extras: list[str]) -> list[tuple[str, str]]:
    """Accept --dotted.name value / --dotted.name=value config overrides."""
    overrides = []
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--") or "." not in token:
            raise ConfigError(f"unrecognized argument: {token}")
        body = token[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extras):
                raise ConfigError(f"override {token} needs a value")
            key, value = body, extras[i + 1]
            i += 2
        overrides.append((key, value))
    return overrides


def _apply_flags(config: RunConfig, args: argparse.Namespace) -> None:
    if args.mode:
        config.run.mode = _MODE_ALIASES[args.mode]
    if args.hint_source:
        config.run.hint_source = args.hint_source
    if args.k is not None:
        config.run.k = args.k
    if args.runs is not None:
        config.run.runs = args.runs
    if args.seed is not None:
        config.run.seed = args.seed
    if args.out:
        config.paths.out_dir = args.out
    if args.problems:
        config.paths.problems = args.problems
    if args.drop_pending:
        config.run.drop_pending = True
    if args.template:
        config.templates["cli_override"] = args.template


def _load_problems(config: RunConfig) -> list:
    path = Path(config.paths.problems)
    if not path.exists():
        raise FileNotFoundError(f"problems file not found: {path}")
    return load_dataset(path, "problems")


def _stage_template(config: RunConfig, stage: str, requires: tuple[str, ...] | None = None):
    override = config.templates.get("cli_override") or config.templates.get(stage)
    if override:
        return load_template(override, name=stage, requires=requires)
    return None


def _require_backend(config: RunConfig, name: str):
    backend = config.backend(name)
    if backend is None:
        raise ConfigError(f"backends.{name} is not configured")
    return backend


def cmd_gen_hints(config: RunConfig, args: argparse.Namespace) -> int:
    problems = _load_problems(config)
    backend = _require_backend(config, "hinter")
    template = _stage_template(config, "oracle")
    Path(config.paths.out_dir).mkdir(parents=True, exist_ok=True)

    sequences = []
    usage_rows = []
    skipped = []
    for problem in problems:
        if not problem.eligible_for_hints:
            skipped.append((problem.id, "no reference solution or answer"))
            continue
        call_log: list[CallUsage] = []
        try:
            sequence = hinter.generate_oracle_hints(
                problem, backend, template=template,
                max_hints=config.run.max_hints, call_log=call_log,
                provenance=_PROVENANCE_BY_SOURCE[config.run.hint_source],
            )
        except Exception as exc:  # noqa: BLE001  per-problem isolation
            skipped.append((problem.id, str(exc)))
            continue
        sequences.append(sequence)
        usage_rows.append({
            "problem_id": problem.id,
            "calls": len(call_log),
            "prompt_tokens": sum(u.prompt_tokens for u in call_log),
            "completion_tokens": sum(u.completion_tokens for u in call_log),
            "wall_time": round(sum(u.wall_time for u in call_log), 6),
        })

    save_dataset(sequences, config.paths.hints())
    with config.paths.hint_usage().open("w", encoding="utf-8") as f:
        for row in usage_rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"wrote {len(sequences)} hint sequences to {config.paths.hints()}")
    return _report_skips(skipped)


def cmd_export_training(config: RunConfig, args: argparse.Namespace) -> int:
    problems = _load_problems(config)
    hints = load_dataset(config.paths.hints(), "hints")
    instances, errors = hinter.export_training_instances(problems, hints)
    Path(config.paths.out_dir).mkdir(parents=True, exist_ok=True)
    save_dataset(instances, config.paths.training())
    print(f"wrote {len(instances)} training instances to {config.paths.training()}")
    return _report_skips([(e.split(":", 1)[0], e) for e in errors])


def cmd_solve(config: RunConfig, args: argparse.Namespace) -> int:
    problems = _load_problems(config)
    backend = _require_backend(config, "solver")
    templates = solver.SolveTemplates.defaults()
    mode = config.run.mode

    hints_by_problem = {}
    if mode == MODE_HINTED:
        hints_path = config.paths.hints()
        if not hints_path.exists():
            raise FileNotFoundError(f"hinted mode needs a hints file: {hints_path}")
        hints_by_problem = {s.problem_id: s for s in load_dataset(hints_path, "hints")}

    Path(config.paths.out_dir).mkdir(parents=True, exist_ok=True)
    skipped = []
    written = 0
    with config.paths.runs().open("a", encoding="utf-8") as out:
        for repeat in range(config.run.runs):
            seed = config.run.seed + repeat
            for problem in problems:
                try:
                    record = _solve_one(problem, mode, hints_by_problem, backend,
                                        templates, config, seed)
                except Exception as exc:  # noqa: BLE001  per-problem isolation
                    skipped.append((problem.id, str(exc)))
                    continue
                out.write(json.dumps(record.to_dict(), ensure_ascii=False,
                                     separators=(", ", ": ")) + "\n")
                written += 1
    print(f"appended {written} run records to {config.paths.runs()}")
    return _report_skips(skipped)


def _solve_one(problem, mode, hints_by_problem, backend, templates, config, seed):
    if mode == MODE_HINTED:
        sequence = hints_by_problem.get(problem.id)
        if sequence is None:
            raise solver.SolveError("no hint sequence for this problem")
        return solver.solve_hinted(
            problem, sequence, backend, templates, seed=seed,
            include_problem_every_step=config.run.include_problem_every_step,
        )
    if mode == MODE_NO_HINT:
        return solver.solve_no_hint(problem, backend, templates, seed=seed)
    return solver.solve_self_consistency(problem, backend, templates, config.run.k, seed=seed)


def cmd_verify(config: RunConfig, args: argparse.Namespace) -> int:
    problems = index_by_id(_load_problems(config))
    runs_path = config.paths.runs()
    if not runs_path.exists():
        raise FileNotFoundError(f"runs file not found: {runs_path}")
    runs = load_dataset(runs_path, "runs")
    judge = config.backend("judge")
    judge_template = _stage_template(config, "judge")

    verdicts = []
    skipped = []
    for record in runs:
        problem = problems.get(record.problem_id)
        if problem is None:
            skipped.append((record.run_id, "run references an unknown problem"))
            continue
        verdicts.append(verify.verify_run(record, problem, judge, judge_template))
    verify.save_verdicts(verdicts, config.paths.verdicts())
    print(f"wrote {len(verdicts)} verdicts to {config.paths.verdicts()}")
    return _report_skips(skipped)


def cmd_report(config: RunConfig, args: argparse.Namespace) -> int:
    problems = _load_problems(config)
    runs = load_dataset(config.paths.runs(), "runs")
    verdicts = verify.load_verdicts(config.paths.verdicts())
    if config.paths.overrides:
        verdicts = verify.apply_human_override(config.paths.overrides, verdicts)

    hint_tokens = {}
    usage_path = config.paths.hint_usage()
    if usage_path.exists():
        with usage_path.open("r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    row = json.loads(line)
                    hint_tokens[row["problem_id"]] = int(row["completion_tokens"])

    reports = metrics.build_reports(runs, verdicts, problems, hint_tokens or None)
    for fmt, suffix in (("csv", "csv"), ("json", "json"), ("markdown_table", "md")):
        metrics.emit_report(reports, fmt, config.paths.report(suffix),
                            drop_pending=config.run.drop_pending)
    metrics.emit_plot_points(runs, verdicts, config.paths.plot_points())
    print(f"wrote report files to {config.paths.out_dir}")
    return EXIT_OK


def _report_skips(skipped: list[tuple[str, str]]) -> int:
    for item_id, reason in skipped:
        print(f"skipped {item_id}: {reason}", file=sys.stderr)
    return EXIT_PARTIAL if skipped else EXIT_OK


_COMMANDS = {
    "gen-hints": cmd_gen_hints,
    "export-training": cmd_export_training,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "report": cmd_report,
}

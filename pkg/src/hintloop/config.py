"""Declarative run configuration.

One YAML file drives the whole pipeline; every key can be overridden on the
command line by its dotted name (``--run.seed 7``). ``${VAR}`` in string
values is replaced from the environment at load time, which is the only way
secrets enter a run — API keys themselves are read lazily from the
environment variable named in the backend block.

Layout::

    paths:
      problems: problems.jsonl
      out_dir: out              # hints/runs/verdicts/report files land here
      overrides: null           # optional human-review JSONL
    backends:
      hinter:  {kind: http|mock, base_url: ..., model: ..., api_key_env: ...}
      solver:  {...}
      judge:   null             # optional
    run:
      mode: hinted              # no_hint | hinted | sc
      hint_source: llm          # llm | ft_slm | nft_slm
      k: 8
      runs: 1
      seed: 0
      max_hints: 16
      include_problem_every_step: false
      drop_pending: false
    templates:                  # optional per-stage template file overrides
      oracle: null
      step_hint: null
      judge: null
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .backend import (
    DecodingParams,
    EndpointConfig,
    HttpBackend,
    MockBackend,
    ScriptEntry,
    ScriptedMockBackend,
)

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class ConfigError(Exception):
    pass


def _interpolate(value: Any) -> Any:
    if isinstance(value, str):
        return _ENV_REF.sub(lambda m: os.environ.get(m.group(1), ""), value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


def load_config_dict(path: str | Path) -> dict:
    raw = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(raw) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return _interpolate(data)


def apply_override(config: dict, dotted_key: str, raw_value: str) -> None:
    """Set ``a.b.c`` to a YAML-parsed scalar, creating intermediate maps."""
    parts = dotted_key.split(".")
    node = config
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot override {dotted_key!r}: {part!r} is not a mapping")
        node = nxt
    node[parts[-1]] = yaml.safe_load(raw_value)


@dataclass
class RunSettings:
    mode: str = "hinted"
    hint_source: str = "llm"
    k: int = 8
    runs: int = 1
    seed: int = 0
    max_hints: int = 16
    include_problem_every_step: bool = False
    drop_pending: bool = False

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ConfigError("run.runs must be >= 1")
        if self.k < 1:
            raise ConfigError("run.k must be >= 1")
        if self.max_hints < 1:
            raise ConfigError("run.max_hints must be >= 1")


@dataclass
class RunPaths:
    problems: str = "problems.jsonl"
    out_dir: str = "out"
    overrides: str | None = None

    def hints(self) -> Path:
        return Path(self.out_dir) / "hints.jsonl"

    def hint_usage(self) -> Path:
        return Path(self.out_dir) / "hint_usage.jsonl"

    def training(self) -> Path:
        return Path(self.out_dir) / "training.jsonl"

    def runs(self) -> Path:
        return Path(self.out_dir) / "runs.jsonl"

    def verdicts(self) -> Path:
        return Path(self.out_dir) / "verdicts.jsonl"

    def report(self, suffix: str) -> Path:
        return Path(self.out_dir) / f"report.{suffix}"

    def plot_points(self) -> Path:
        return Path(self.out_dir) / "plot_points.csv"


@dataclass
class RunConfig:
    paths: RunPaths = field(default_factory=RunPaths)
    backends: dict = field(default_factory=dict)
    run: RunSettings = field(default_factory=RunSettings)
    templates: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        paths_block = data.get("paths") or {}
        run_block = data.get("run") or {}
        known_paths = {k: v for k, v in paths_block.items()
                       if k in ("problems", "out_dir", "overrides")}
        known_run = {k: v for k, v in run_block.items()
                     if k in RunSettings.__dataclass_fields__}
        return cls(
            paths=RunPaths(**known_paths),
            backends=data.get("backends") or {},
            run=RunSettings(**known_run),
            templates=data.get("templates") or {},
        )

    @classmethod
    def from_file(cls, path: str | Path,
                  overrides: list[tuple[str, str]] | None = None) -> "RunConfig":
        data = load_config_dict(path)
        for key, value in overrides or []:
            apply_override(data, key, value)
        return cls.from_dict(data)

    def backend(self, name: str):
        """Build the named backend, or None when it is not configured."""
        block = self.backends.get(name)
        if block is None:
            return None
        if not isinstance(block, dict):
            raise ConfigError(f"backends.{name} must be a mapping")
        kind = block.get("kind", "http")
        if kind == "mock":
            rules = [_script_entry(e) for e in block.get("rules") or []]
            script = block.get("script")
            if script:
                return MockBackend([_script_entry(e) for e in script],
                                   model_name=block.get("model", "mock"))
            return ScriptedMockBackend(rules, model_name=block.get("model", "mock"))
        if kind != "http":
            raise ConfigError(f"backends.{name}.kind must be 'http' or 'mock', got {kind!r}")
        try:
            endpoint = EndpointConfig(
                base_url=block["base_url"],
                model_name=block.get("model", ""),
                api_key_env_var=block.get("api_key_env", ""),
                timeout_s=float(block.get("timeout_s", 120.0)),
                max_retries=int(block.get("max_retries", 2)),
                max_concurrency=int(block.get("max_concurrency", 4)),
                decoding=_decoding(block.get("decoding") or {}),
            )
        except KeyError as exc:
            raise ConfigError(f"backends.{name}: missing required key {exc}") from exc
        return HttpBackend(endpoint)


def _decoding(block: dict) -> DecodingParams:
    return DecodingParams(
        temperature=float(block.get("temperature", 0.0)),
        top_p=float(block.get("top_p", 1.0)),
        max_new_tokens=int(block.get("max_new_tokens", 2048)),
        seed=block.get("seed"),
        response_format=block.get("response_format", "free_text"),
    )


def _script_entry(block: dict) -> ScriptEntry:
    if not isinstance(block, dict) or "response" not in block:
        raise ConfigError("mock script/rule entries need at least a 'response' key")
    return ScriptEntry(
        response=str(block["response"]),
        prompt_tokens=int(block.get("prompt_tokens", 0)),
        completion_tokens=int(block.get("completion_tokens", 0)),
        wall_time=float(block.get("wall_time", 0.0)),
        match=block.get("contains"),
    )

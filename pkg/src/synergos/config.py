"""Run configuration: a TOML file validated into dataclasses.

Unknown keys are errors (typos should fail loudly, not silently fall back
to defaults), and exactly one backend source may appear in the file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIOS = ("trio-chat", "apartment", "apartment-cake", "coding")


class ConfigError(Exception):
    """A configuration file problem, with the offending field in the message."""


@dataclass(frozen=True)
class AgentOverride:
    name: str
    persona: str | None = None
    temperature: float | None = None
    history_cap: int | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    backend_url: str | None = None
    backend_script: str | None = None
    max_rounds: int = 12
    seed: int = 0
    history_cap: int = 20
    moderator_temperature: float = 0.2
    agent_temperature: float = 0.9
    max_tokens: int = 512
    action_subset: int = 4
    structured_retries: int = 2
    retrieval_decay: float = 0.03
    retrieval_k: int = 5
    transcript_path: str = "transcript.jsonl"
    log_path: str = "run.log"
    memory_path: str | None = None
    agents: tuple[AgentOverride, ...] = ()
    # coding scenario
    problem: str | None = None
    problem_file: str | None = None
    unanimous: bool = True
    max_edit_lines: int = 5
    extension: str = "py"
    post_run_hook: str | None = None
    code_path: str | None = None


def _take(table: dict[str, Any], where: str, known: dict[str, type]) -> dict[str, Any]:
    """Pop known keys, type-checking each; anything left over is a typo."""
    out: dict[str, Any] = {}
    for key, expected in known.items():
        if key not in table:
            continue
        value = table.pop(key)
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if expected is int and isinstance(value, bool):
            raise ConfigError(f"{where}.{key} must be an integer")
        if not isinstance(value, expected):
            raise ConfigError(f"{where}.{key} must be a {expected.__name__}")
        out[key] = value
    if table:
        raise ConfigError(f"unknown key {where}.{next(iter(table))!r}")
    return out


def _subtable(tables: dict[str, Any], name: str) -> dict[str, Any]:
    value = tables.pop(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a table")
    return dict(value)


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    top = _take(dict((k, v) for k, v in data.items()
                     if not isinstance(v, (dict, list))), "top-level", {
        "scenario": str,
        "max_rounds": int,
        "seed": int,
    })
    tables = {k: v for k, v in data.items() if isinstance(v, (dict, list))}

    scenario = top.get("scenario")
    if scenario is None:
        raise ConfigError("missing required key 'scenario'")
    if scenario not in SCENARIOS:
        raise ConfigError(
            f"scenario must be one of {', '.join(SCENARIOS)}; got {scenario!r}"
        )

    backend = _take(_subtable(tables, "backend"), "backend",
                    {"url": str, "script": str})
    if backend.get("url") and backend.get("script"):
        raise ConfigError("backend.url and backend.script are mutually exclusive")

    engine = _take(_subtable(tables, "engine"), "engine", {
        "history_cap": int,
        "moderator_temperature": float,
        "agent_temperature": float,
        "max_tokens": int,
        "action_subset": int,
        "structured_retries": int,
    })
    retrieval = _take(_subtable(tables, "retrieval"), "retrieval",
                      {"decay": float, "k": int})
    output = _take(_subtable(tables, "output"), "output", {
        "transcript": str,
        "log": str,
        "memory": str,
        "code": str,
    })
    coding = _take(_subtable(tables, "coding"), "coding", {
        "problem": str,
        "problem_file": str,
        "unanimous": bool,
        "max_edit_lines": int,
        "extension": str,
        "post_run_hook": str,
    })

    agent_entries = tables.pop("agents", [])
    if not isinstance(agent_entries, list):
        raise ConfigError("agents must be an array of tables ([[agents]])")
    overrides: list[AgentOverride] = []
    for i, entry in enumerate(agent_entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"agents[{i}] must be a table")
        fields = _take(dict(entry), f"agents[{i}]", {
            "name": str,
            "persona": str,
            "temperature": float,
            "history_cap": int,
        })
        if "name" not in fields:
            raise ConfigError(f"agents[{i}] needs a name")
        overrides.append(AgentOverride(**fields))

    if tables:
        raise ConfigError(f"unknown table {next(iter(tables))!r}")
    if coding.get("problem") and coding.get("problem_file"):
        raise ConfigError("coding.problem and coding.problem_file are mutually exclusive")

    return ScenarioConfig(
        scenario=scenario,
        backend_url=backend.get("url"),
        backend_script=backend.get("script"),
        max_rounds=top.get("max_rounds", 12),
        seed=top.get("seed", 0),
        history_cap=engine.get("history_cap", 20),
        moderator_temperature=engine.get("moderator_temperature", 0.2),
        agent_temperature=engine.get("agent_temperature", 0.9),
        max_tokens=engine.get("max_tokens", 512),
        action_subset=engine.get("action_subset", 4),
        structured_retries=engine.get("structured_retries", 2),
        retrieval_decay=retrieval.get("decay", 0.03),
        retrieval_k=retrieval.get("k", 5),
        transcript_path=output.get("transcript", "transcript.jsonl"),
        log_path=output.get("log", "run.log"),
        memory_path=output.get("memory"),
        agents=tuple(overrides),
        problem=coding.get("problem"),
        problem_file=coding.get("problem_file"),
        unanimous=coding.get("unanimous", True),
        max_edit_lines=coding.get("max_edit_lines", 5),
        extension=coding.get("extension", "py"),
        post_run_hook=coding.get("post_run_hook"),
        code_path=output.get("code"),
    )

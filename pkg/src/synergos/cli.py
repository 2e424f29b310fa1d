"""Scenario runner: configure, execute, and write transcripts.

``synergos run --config <file>`` runs one of the bundled scenarios
(trio-chat, apartment, apartment-cake, coding) against either a live
chat-completions server or a replayed cassette, streaming a JSONL
transcript plus a mirrored human-readable log.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Sequence

from .agents import (
    Agent,
    DIRECTED_SCHEMA,
    DirectedMessage,
    Roster,
    UnknownTargetError,
    new_agent,
    next_speaker,
    respond_structured,
)
from .apartment import build_apartment, build_cake_variant
from .coding import CodingConfig, build_coders, run_coding
from .config import ConfigError, ScenarioConfig, load_config
from .engine import EngineConfig, run_loop
from .gateway import (
    BackendUnreachableError,
    CassetteRecorder,
    Gateway,
    GatewayError,
    GenParams,
    HttpGateway,
    ScriptedGateway,
    script_from_cassette,
    system,
)
from .memory import MemoryStore, RetrievalParams

logger = logging.getLogger(__name__)

ENV_URL = "SYNERGOS_LLM_URL"
ENV_LOG = "SYNERGOS_LOG"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BACKEND = 2

TRIO_DESCRIPTIONS = {
    "Jerome": "a mighty barbarian",
    "Bo": "a high class Frenchman",
    "Tom": "an argumentative and highly opinionated tech entrepreneur",
}
TRIO_ORDER = ("Jerome", "Bo", "Tom")

OPENING_PROMPT = (
    "Start the conversation: greet one of the others and say something in "
    "character."
)


def trio_persona(name: str, description: str, others: Sequence[str]) -> str:
    return (
        f"Your name is {name}. You are {description}. You are in a "
        f"conversation with {' and '.join(others)}. Every turn, reply with "
        'only a JSON object of the form {"message": "<what you say>", '
        '"to": "<name of the recipient>"}.'
    )


@dataclass(frozen=True)
class TrioTurnRecord:
    """One routed exchange in the trio conversation."""

    turn: int
    speaker: str
    to: str
    message: str
    error: str | None = None

    def line(self) -> str:
        if self.error:
            return f"{self.speaker} -> ? :: (failed: {self.error})"
        return f"{self.speaker} -> {self.to} :: {self.message}"

    def to_json(self) -> dict[str, Any]:
        return {
            "turn": self.turn,
            "speaker": self.speaker,
            "to": self.to,
            "message": self.message,
            "error": self.error,
        }


def default_trio_roster(params: GenParams, history_cap: int = 20,
                        order: Sequence[str] = TRIO_ORDER) -> Roster:
    roster = Roster()
    for name in order:
        description = TRIO_DESCRIPTIONS.get(name, "an individual")
        others = [n for n in order if n != name]
        roster.add(new_agent(name, trio_persona(name, description, others),
                             params, history_cap))
    return roster


def run_trio_chat(gateway: Gateway, roster: Roster | None = None,
                  max_rounds: int = 12, retries: int = 2,
                  on_turn: Callable[[TrioTurnRecord], None] | None = None,
                  params: GenParams | None = None) -> list[TrioTurnRecord]:
    """Three agents talk; whoever received the last message speaks next.

    The first speaker is roster position 0. An unknown recipient (or an
    unparseable reply) falls back to round-robin with a logged warning
    rather than stopping the conversation.
    """
    if roster is None:
        roster = default_trio_roster(params or GenParams(temperature=0.9))
    if len(roster) == 0:
        raise ValueError("trio-chat needs at least one agent")
    transcript: list[TrioTurnRecord] = []
    speaker_index = 0
    prompt = OPENING_PROMPT
    total_turns = max_rounds * len(roster)
    for turn in range(total_turns):
        speaker = roster[speaker_index]
        round_robin = (speaker_index + 1) % len(roster)
        try:
            fields = respond_structured(speaker, gateway, prompt,
                                        DIRECTED_SCHEMA, retries)
        except BackendUnreachableError:
            raise
        except GatewayError as exc:
            logger.warning("turn %d (%s) failed: %s", turn, speaker.name, exc)
            rec = TrioTurnRecord(turn, speaker.name, "", "", error=str(exc))
            transcript.append(rec)
            if on_turn is not None:
                on_turn(rec)
            speaker_index = round_robin
            prompt = "It is your turn to speak."
            continue
        dm = DirectedMessage(message=fields["message"], to=fields["to"])
        rec = TrioTurnRecord(turn, speaker.name, dm.to, dm.message)
        transcript.append(rec)
        if on_turn is not None:
            on_turn(rec)
        try:
            next_id = next_speaker(roster, dm)
            speaker_index = next(i for i, a in enumerate(roster) if a.id == next_id)
            prompt = f'{speaker.name} says to you: "{dm.message}"'
        except UnknownTargetError:
            logger.warning("no agent named %r; falling back to round-robin", dm.to)
            speaker_index = round_robin
            prompt = "It is your turn to speak."
    return transcript


class TranscriptWriter:
    """Streams records to a JSONL transcript and a plain-text log, per turn."""

    def __init__(self, jsonl_path: Path, log_path: Path) -> None:
        jsonl_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        self._jsonl = jsonl_path.open("w", encoding="utf-8")
        self._log = log_path.open("w", encoding="utf-8")
        self.count = 0

    def write(self, record: Any, line: str) -> None:
        self._jsonl.write(json.dumps(record.to_json()) + "\n")
        self._jsonl.flush()
        self._log.write(line + "\n")
        self._log.flush()
        self.count += 1

    def close(self) -> None:
        self._jsonl.close()
        self._log.close()


def _apply_override(agent: Agent, override, max_tokens: int, seed: int) -> None:
    if override.persona is not None:
        agent.persona = override.persona
        agent.history[0] = system(override.persona)
    if override.temperature is not None:
        agent.params = GenParams(temperature=override.temperature,
                                 max_tokens=max_tokens, seed=seed)
    if override.history_cap is not None:
        agent.history_cap = override.history_cap


def _build_gateway(config: ScenarioConfig, script_arg: str | None,
                   record_path: str | None) -> Gateway:
    """Pick the backend: --script flag, then config, then the env URL."""
    script_path = script_arg or config.backend_script
    if script_path:
        if not Path(script_path).is_file():
            raise ConfigError(f"cassette not found: {script_path}")
        gateway: Gateway = ScriptedGateway(script_from_cassette(script_path),
                                           seed=config.seed)
    else:
        url = config.backend_url or os.environ.get(ENV_URL)
        if not url:
            raise ConfigError(
                f"no backend: set backend.url or backend.script in the config, "
                f"pass --script, or export {ENV_URL}"
            )
        live = HttpGateway(url)
        if not live.ping():
            raise BackendUnreachableError(f"no server answering at {url}")
        gateway = live
    if record_path:
        gateway = CassetteRecorder(gateway, record_path)
    return gateway


def _turn_line(outcome) -> str:
    call = outcome.call
    action = f"{call.name}({', '.join(repr(a) for a in call.args)})" if call else "no action"
    return (
        f"[turn {outcome.turn}] {outcome.agent_id}: {action} "
        f"[{outcome.validation}] {outcome.effect}"
    )


def _coding_line(rec) -> str:
    if rec.edit is not None:
        edited = f"edit {rec.edit.kind}@{rec.edit.anchor}"
    elif rec.edit_error:
        edited = f"edit rejected ({rec.edit_error})"
    else:
        edited = "no edit"
    done = ", done" if rec.done else ""
    return f"[turn {rec.turn}] {rec.agent_id}: {edited}{done} :: {rec.chat}"


def _run_scenario(config: ScenarioConfig, gateway: Gateway,
                  out_override: str | None) -> dict[str, Any]:
    params = GenParams(temperature=config.agent_temperature,
                       max_tokens=config.max_tokens, seed=config.seed)
    transcript_path = Path(config.transcript_path)
    if out_override and config.scenario != "coding":
        transcript_path = Path(out_override)
    writer = TranscriptWriter(transcript_path, Path(config.log_path))
    stats = {"transcript": str(transcript_path), "log": config.log_path}
    try:
        if config.scenario == "trio-chat":
            roster = None
            if config.agents:
                roster = default_trio_roster(params, config.history_cap,
                                             [o.name for o in config.agents])
                for agent, override in zip(roster, config.agents):
                    _apply_override(agent, override, config.max_tokens, config.seed)
            records = run_trio_chat(
                gateway, roster, config.max_rounds, config.structured_retries,
                on_turn=lambda r: writer.write(r, r.line()), params=params)
            stats["turns"] = len(records)
            stats["failed"] = sum(1 for r in records if r.error)

        elif config.scenario in ("apartment", "apartment-cake"):
            build = build_apartment if config.scenario == "apartment" else build_cake_variant
            scenario = build(
                history_cap=config.history_cap,
                moderator_temperature=config.moderator_temperature,
                roommate_temperature=config.agent_temperature,
            )
            for member in list(scenario.roster) + [scenario.moderator]:
                member.params = GenParams(
                    temperature=member.params.temperature,
                    max_tokens=config.max_tokens, seed=config.seed)
            for override in config.agents:
                target = (scenario.moderator if override.name == "Moderator"
                          else scenario.roster.by_name(override.name))
                _apply_override(target, override, config.max_tokens, config.seed)
            memory = MemoryStore()
            engine_config = EngineConfig(
                max_rounds=config.max_rounds,
                action_subset=config.action_subset,
                structured_retries=config.structured_retries,
                retrieval=RetrievalParams(decay=config.retrieval_decay,
                                          k=config.retrieval_k),
            )
            outcomes = run_loop(
                scenario.roster, scenario.moderator, scenario.world, memory,
                gateway, engine_config,
                on_turn=lambda o: writer.write(o, _turn_line(o)))
            stats["turns"] = len(outcomes)
            stats["failed"] = sum(1 for o in outcomes if not o.ok)
            if config.memory_path:
                memory.dump(config.memory_path)
                stats["memory"] = config.memory_path

        elif config.scenario == "coding":
            problem = config.problem
            if config.problem_file:
                problem_file = Path(config.problem_file)
                if not problem_file.is_file():
                    raise ConfigError(f"problem file not found: {problem_file}")
                problem = problem_file.read_text(encoding="utf-8")
            if not problem:
                raise ConfigError("coding scenario needs coding.problem or "
                                  "coding.problem_file")
            code_path = (out_override or config.code_path
                         or f"solution.{config.extension}")
            names = [o.name for o in config.agents] or ["Coder 1", "Coder 2"]
            roster = build_coders(names, problem,
                                  temperature=config.agent_temperature,
                                  history_cap=config.history_cap)
            for coder in roster:
                coder.params = GenParams(
                    temperature=coder.params.temperature,
                    max_tokens=config.max_tokens, seed=config.seed)
            for agent, override in zip(roster, config.agents):
                _apply_override(agent, override, config.max_tokens, config.seed)
            coding_config = CodingConfig(
                max_rounds=config.max_rounds,
                unanimous=config.unanimous,
                max_edit_lines=config.max_edit_lines,
                structured_retries=config.structured_retries,
                out_path=code_path,
                extension=config.extension,
                post_run_hook=config.post_run_hook,
            )
            _, records = run_coding(
                roster, problem, gateway, coding_config,
                on_turn=lambda r: writer.write(r, _coding_line(r)))
            stats["turns"] = len(records)
            stats["failed"] = sum(1 for r in records if r.edit_error)
            stats["code"] = str(code_path)
        else:  # pragma: no cover - load_config already rejects this
            raise ConfigError(f"unknown scenario {config.scenario!r}")
    finally:
        writer.close()
    return stats


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synergos",
        description="Run turn-based multi-agent LLM simulations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a configured scenario")
    run.add_argument("--config", required=True, help="scenario config (TOML)")
    run.add_argument("--script", help="cassette to replay instead of a live backend")
    run.add_argument("--out", help="override the primary output path "
                                   "(transcript, or the code file for coding)")
    run.add_argument("--max-rounds", type=int, help="override max_rounds")
    run.add_argument("--seed", type=int, help="override the run seed")
    run.add_argument("--record", help="record every backend exchange to this cassette")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get(ENV_LOG, "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK

    try:
        config = load_config(args.config)
        if args.max_rounds is not None:
            config = replace(config, max_rounds=args.max_rounds)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        gateway = _build_gateway(config, args.script, args.record)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_CONFIG
    except BackendUnreachableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    try:
        stats = _run_scenario(config, gateway, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendUnreachableError, GatewayError) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    print(f"scenario: {config.scenario}")
    print(f"turns run: {stats.get('turns', 0)}, failed: {stats.get('failed', 0)}")
    for key in ("transcript", "log", "memory", "code"):
        if key in stats:
            print(f"{key}: {stats[key]}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

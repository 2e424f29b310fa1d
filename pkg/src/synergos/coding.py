"""Collaborative coding scenario: a shared buffer, a chatroom, a plan.

A planner first splits the problem into steps. Agents then take turns,
each making at most one bounded line edit (insert after a line, or replace
a half-open line range, capped at a few lines) and posting one chatroom
message. An agent can declare the code done; depending on the configured
mode the loop stops at the first declaration or once every agent agrees
within a round. The final buffer is written to a file.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .agents import Agent, Roster, new_agent, respond_structured
from .gateway import (
    BackendUnreachableError,
    FieldSpec,
    Gateway,
    GatewayError,
    GenParams,
    assistant,
    system,
    user,
)

logger = logging.getLogger(__name__)

MAX_EDIT_LINES = 5
CHAT_CONTEXT = 10

PLANNER_PERSONA = (
    "You are an expert problem solver. Split the programming problem you "
    "are given into a short numbered list of implementation steps."
)
CODER_PERSONA = (
    "You are {name}, a software developer collaborating with others on a "
    "shared code buffer to solve a programming problem. Each turn you may "
    "make one small edit and must post one short chatroom message. You "
    "respond only with the JSON object you are asked for."
)

TURN_SCHEMA = (
    FieldSpec("edit", required=False, kind="object"),
    FieldSpec("chat", kind="string"),
    FieldSpec("done", required=False, kind="boolean"),
)

_STEP_MARKER = re.compile(r"^\s*(?:\d+[.):]|[-*•])\s+(.*\S)\s*$")


class EditError(ValueError):
    """An edit that cannot be applied to the buffer as it stands."""


@dataclass(frozen=True)
class Edit:
    """One bounded change: insert lines after an anchor, or replace a range.

    ``anchor`` is a 0-based line index for insert_after (-1 inserts at the
    top) or a half-open ``(start, end)`` pair for replace_range.
    """

    kind: str  # insert_after | replace_range
    anchor: int | tuple[int, int]
    new_lines: tuple[str, ...]

    def to_json(self) -> dict[str, Any]:
        anchor = list(self.anchor) if isinstance(self.anchor, tuple) else self.anchor
        return {"kind": self.kind, "anchor": anchor, "new_lines": list(self.new_lines)}


def parse_edit(obj: dict[str, Any]) -> Edit:
    """Build an Edit from a structured-reply object; shape errors raise."""
    kind = obj.get("kind")
    new_lines = obj.get("new_lines")
    anchor = obj.get("anchor")
    if not isinstance(new_lines, list) or not all(isinstance(s, str) for s in new_lines):
        raise EditError(f"new_lines must be a list of strings, got {new_lines!r}")
    if kind == "insert_after":
        if not isinstance(anchor, int) or isinstance(anchor, bool):
            raise EditError(f"insert_after anchor must be a line index, got {anchor!r}")
        return Edit("insert_after", anchor, tuple(new_lines))
    if kind == "replace_range":
        if (not isinstance(anchor, (list, tuple)) or len(anchor) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in anchor)):
            raise EditError(
                f"replace_range anchor must be a [start, end] pair, got {anchor!r}"
            )
        return Edit("replace_range", (anchor[0], anchor[1]), tuple(new_lines))
    raise EditError(f"edit kind must be insert_after or replace_range, got {kind!r}")


@dataclass
class CodeBuffer:
    """Shared source text plus the log of every accepted edit."""

    lines: list[str] = field(default_factory=list)
    edit_log: list[tuple[int, str, Edit]] = field(default_factory=list)

    def text(self) -> str:
        """Buffer contents with a trailing newline per line."""
        return "".join(line + "\n" for line in self.lines)

    def numbered(self) -> str:
        if not self.lines:
            return "(the code buffer is empty)"
        return "\n".join(f"{i} | {line}" for i, line in enumerate(self.lines))

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.text(), encoding="utf-8")
        return path

    @classmethod
    def replay(cls, edit_log: Sequence[tuple[int, str, Edit]]) -> "CodeBuffer":
        """Rebuild a buffer from scratch by replaying an edit log."""
        buffer = cls()
        for turn, agent_id, edit in edit_log:
            apply_edit(buffer, edit, turn=turn, agent_id=agent_id)
        return buffer


def apply_edit(buffer: CodeBuffer, edit: Edit, max_lines: int = MAX_EDIT_LINES,
               turn: int = 0, agent_id: str = "") -> CodeBuffer:
    """Apply one edit in place and log it; bounds or cap violations raise."""
    if len(edit.new_lines) > max_lines:
        raise EditError(
            f"edit brings {len(edit.new_lines)} lines, the cap is {max_lines}"
        )
    n = len(buffer.lines)
    if edit.kind == "insert_after":
        anchor = edit.anchor
        assert isinstance(anchor, int)
        if not -1 <= anchor < n:  # -1 inserts at the top; only option when empty
            raise EditError(f"insert_after anchor {anchor} outside -1..{n - 1}")
        buffer.lines[anchor + 1:anchor + 1] = list(edit.new_lines)
    elif edit.kind == "replace_range":
        start, end = edit.anchor  # type: ignore[misc]
        if not (0 <= start < end <= n):
            raise EditError(f"replace_range [{start}, {end}) outside buffer of {n} lines")
        buffer.lines[start:end] = list(edit.new_lines)
    else:
        raise EditError(f"unknown edit kind {edit.kind!r}")
    buffer.edit_log.append((turn, agent_id, edit))
    return buffer


@dataclass(frozen=True)
class ChatMessage:
    turn: int
    agent_id: str
    text: str


@dataclass
class Chatroom:
    """Append-only message list relayed to every agent each turn."""

    messages: list[ChatMessage] = field(default_factory=list)

    def post(self, turn: int, agent_id: str, text: str) -> ChatMessage:
        msg = ChatMessage(turn, agent_id, text)
        self.messages.append(msg)
        return msg

    def tail(self, count: int = CHAT_CONTEXT) -> list[ChatMessage]:
        return self.messages[-count:]


@dataclass(frozen=True)
class Plan:
    steps: tuple[str, ...]

    def render(self) -> str:
        return "\n".join(f"{i}. {step}" for i, step in enumerate(self.steps, start=1))


def parse_steps(reply: str) -> list[str]:
    return [m.group(1) for m in (_STEP_MARKER.match(line) for line in reply.splitlines()) if m]


def plan(problem_text: str, gateway: Gateway,
         params: GenParams | None = None, retries: int = 2) -> Plan:
    """Ask the planner to split the problem into steps.

    A reply with no list markers still yields a one-step plan from the raw
    text (logged); only blank replies are retried.
    """
    if not problem_text:
        raise ValueError("problem_text must be non-empty")
    params = params or GenParams(temperature=0.2)
    history = [system(PLANNER_PERSONA), user(problem_text)]
    reply = ""
    for _ in range(retries + 1):
        reply = gateway.chat(history, params)
        steps = parse_steps(reply)
        if steps:
            return Plan(tuple(steps))
        if reply.strip():
            logger.warning("planner reply had no list markers; using it as one step")
            return Plan((reply.strip(),))
        history = history + [
            assistant(reply),
            user("Your reply was empty. List the implementation steps, one per line."),
        ]
    logger.warning("planner kept replying empty; falling back to a single raw step")
    return Plan((reply,))


@dataclass(frozen=True)
class CodingTurnRecord:
    """What one coding turn did, including rejected edits."""

    turn: int
    agent_id: str
    edit: Edit | None
    edit_error: str | None
    chat: str
    done: bool

    def to_json(self) -> dict[str, Any]:
        return {
            "turn": self.turn,
            "agent_id": self.agent_id,
            "edit": self.edit.to_json() if self.edit else None,
            "edit_error": self.edit_error,
            "chat": self.chat,
            "done": self.done,
        }


@dataclass(frozen=True)
class CodingConfig:
    max_rounds: int = 12
    unanimous: bool = True  # False stops at the first done signal
    max_edit_lines: int = MAX_EDIT_LINES
    chat_context: int = CHAT_CONTEXT
    structured_retries: int = 2
    out_path: str | Path | None = None
    extension: str = "py"
    post_run_hook: str | None = None  # reserved: name of a check to run on the file

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.max_edit_lines < 1:
            raise ValueError("max_edit_lines must be >= 1")


def _turn_prompt(problem: str, the_plan: Plan, buffer: CodeBuffer,
                 chatroom: Chatroom, config: CodingConfig) -> str:
    recent = chatroom.tail(config.chat_context)
    chat_block = "\n".join(
        f"[turn {m.turn}] {m.agent_id}: {m.text}" for m in recent
    ) or "(the chatroom is empty)"
    return (
        f"Problem:\n{problem}\n\n"
        f"Plan:\n{the_plan.render()}\n\n"
        f"Current code (0-based line numbers):\n{buffer.numbered()}\n\n"
        f"Recent chatroom messages:\n{chat_block}\n\n"
        f"Make at most one edit of up to {config.max_edit_lines} lines, then "
        "post one short chatroom message. Respond with only a JSON object: "
        '{"edit": {"kind": "insert_after", "anchor": <line>, "new_lines": [...]} '
        'or {"kind": "replace_range", "anchor": [<start>, <end>], "new_lines": [...]} '
        'or null, "chat": "<message>", "done": <true once the code is complete>}'
    )


def coding_turn(agent: Agent, buffer: CodeBuffer, chatroom: Chatroom,
                the_plan: Plan, gateway: Gateway, *, problem: str,
                turn: int, config: CodingConfig | None = None) -> CodingTurnRecord:
    """One agent's turn: optional bounded edit, required chat, done flag.

    An over-cap or out-of-bounds edit is rejected (and recorded) while the
    chat message still posts; a reply that never parses costs the agent
    their edit and posts a failure note instead.
    """
    config = config or CodingConfig()
    prompt = _turn_prompt(problem, the_plan, buffer, chatroom, config)
    try:
        fields = respond_structured(agent, gateway, prompt, TURN_SCHEMA,
                                    config.structured_retries)
    except BackendUnreachableError:
        raise
    except GatewayError as exc:
        logger.warning("coding turn %d (%s) failed: %s", turn, agent.id, exc)
        rec = CodingTurnRecord(turn, agent.id, None, f"turn failed: {exc}",
                               "(no usable reply this turn)", False)
        chatroom.post(turn, agent.id, rec.chat)
        return rec

    edit: Edit | None = None
    edit_error: str | None = None
    if fields["edit"] is not None:
        try:
            edit = parse_edit(fields["edit"])
            apply_edit(buffer, edit, config.max_edit_lines, turn, agent.id)
        except EditError as exc:
            logger.warning("edit rejected on turn %d (%s): %s", turn, agent.id, exc)
            edit, edit_error = None, str(exc)
    chat_text = fields["chat"]
    done = bool(fields["done"]) if fields["done"] is not None else False
    chatroom.post(turn, agent.id, chat_text)
    return CodingTurnRecord(turn, agent.id, edit, edit_error, chat_text, done)


def build_coders(names: Sequence[str], problem: str,
                 temperature: float = 0.9, history_cap: int = 20) -> Roster:
    roster = Roster()
    for name in names:
        persona = CODER_PERSONA.format(name=name) + f"\n\nThe problem:\n{problem}"
        roster.add(new_agent(name, persona, GenParams(temperature=temperature),
                             history_cap))
    return roster


def run_coding(agents: Roster | Sequence[Agent], problem: str, gateway: Gateway,
               config: CodingConfig | None = None,
               on_turn=None) -> tuple[CodeBuffer, list[CodingTurnRecord]]:
    """Plan, then loop coding turns until done fires or rounds run out.

    Termination: first done signal in single mode, every agent signaling
    done within one round in unanimous mode. The final buffer goes to
    ``config.out_path`` when set, and the edit log always replays back to
    the exact buffer contents.
    """
    roster = agents if isinstance(agents, Roster) else Roster(list(agents))
    if len(roster) < 2:
        raise ValueError("collaborative coding needs at least 2 agents")
    config = config or CodingConfig()
    the_plan = plan(problem, gateway)
    buffer = CodeBuffer()
    chatroom = Chatroom()
    transcript: list[CodingTurnRecord] = []
    turn = 0
    finished = False
    for _ in range(config.max_rounds):
        done_this_round: set[str] = set()
        for agent in roster:
            rec = coding_turn(agent, buffer, chatroom, the_plan, gateway,
                              problem=problem, turn=turn, config=config)
            transcript.append(rec)
            if on_turn is not None:
                on_turn(rec)
            turn += 1
            replayed = CodeBuffer.replay(buffer.edit_log)
            if replayed.lines != buffer.lines:
                raise RuntimeError("edit log no longer replays to the buffer")
            if rec.done:
                done_this_round.add(agent.id)
                if not config.unanimous:
                    finished = True
                    break
        if finished or (config.unanimous
                        and done_this_round == {a.id for a in roster}):
            finished = True
            break
    if config.out_path is not None:
        out = Path(config.out_path)
        buffer.write(out)
        logger.info("final code written to %s", out)
        if config.post_run_hook:
            # execution feedback is deliberately not built; hand the name on
            logger.info("post-run hook %r configured; run it on %s yourself",
                        config.post_run_hook, out)
    return buffer, transcript

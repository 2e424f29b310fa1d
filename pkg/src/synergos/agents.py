"""Persona-bearing agents: bounded histories, directed messages, routing.

An agent is a system prompt plus a private message history. Prompting
appends a user message, generates a reply, appends it, then truncates the
history back under its cap (the system prompt is never evicted). Directed
messages name a recipient, and the recipient speaks next.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterator

from .gateway import (
    FieldSpec,
    Gateway,
    GenParams,
    Msg,
    assistant,
    extract_fields,
    system,
    user,
)

DEFAULT_HISTORY_CAP = 20


class ParseError(ValueError):
    """Text contained no JSON object with the expected fields."""


class UnknownTargetError(LookupError):
    """A directed message named someone who is not on the roster."""


@dataclass(frozen=True)
class DirectedMessage:
    """A message body plus the name of the agent who should receive it."""

    message: str
    to: str


DIRECTED_SCHEMA = (FieldSpec("message", kind="string"), FieldSpec("to", kind="string"))


def serialize_directed(dm: DirectedMessage) -> str:
    return json.dumps({"message": dm.message, "to": dm.to})


def parse_directed(text: str) -> DirectedMessage:
    """Extract a directed message from free-form model output.

    Scans for the first embedded JSON object carrying string ``message``
    and ``to`` fields; surrounding prose is tolerated.
    """
    fields = extract_fields(text, DIRECTED_SCHEMA)
    if fields is None:
        raise ParseError(f"no directed message found in {text!r}")
    return DirectedMessage(message=fields["message"], to=fields["to"])


@dataclass
class Agent:
    """An identity (persona system prompt) with a bounded private history."""

    name: str
    persona: str
    params: GenParams = field(default_factory=GenParams)
    history_cap: int = DEFAULT_HISTORY_CAP
    id: str = ""
    history: list[Msg] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.history_cap < 2:
            raise ValueError(
                f"history_cap must be >= 2 (system prompt plus room to talk), "
                f"got {self.history_cap}"
            )
        if not self.id:
            self.id = self.name
        if not self.history:
            self.history = [system(self.persona)]


def new_agent(name: str, persona: str, params: GenParams | None = None,
              history_cap: int = DEFAULT_HISTORY_CAP, id: str = "") -> Agent:
    """Create an agent whose history holds exactly its persona system prompt."""
    return Agent(
        name=name,
        persona=persona,
        params=params if params is not None else GenParams(),
        history_cap=history_cap,
        id=id,
    )


class Roster:
    """Ordered collection of agents with unique names."""

    def __init__(self, agents: list[Agent] | None = None) -> None:
        self._agents: list[Agent] = []
        self._by_name: dict[str, Agent] = {}
        for agent in agents or []:
            self.add(agent)

    def add(self, agent: Agent) -> Agent:
        if agent.name in self._by_name:
            raise ValueError(f"duplicate agent name: {agent.name!r}")
        self._agents.append(agent)
        self._by_name[agent.name] = agent
        return agent

    def create(self, name: str, persona: str, params: GenParams | None = None,
               history_cap: int = DEFAULT_HISTORY_CAP) -> Agent:
        return self.add(new_agent(name, persona, params, history_cap))

    def by_name(self, name: str) -> Agent:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownTargetError(f"no agent named {name!r}") from None

    def names(self) -> list[str]:
        return [a.name for a in self._agents]

    def __iter__(self) -> Iterator[Agent]:
        return iter(self._agents)

    def __len__(self) -> int:
        return len(self._agents)

    def __getitem__(self, index: int) -> Agent:
        return self._agents[index]

    def __contains__(self, name: object) -> bool:
        return name in self._by_name


def truncate(agent: Agent) -> None:
    """Drop the oldest non-system messages until the history fits the cap.

    Keeps the persona system prompt plus the most recent ``cap - 1``
    messages, in order. Idempotent.
    """
    if len(agent.history) <= agent.history_cap:
        return
    head = agent.history[0]
    rest = agent.history[1:]
    agent.history = [head] + rest[-(agent.history_cap - 1):]


def respond(agent: Agent, gateway: Gateway, user_prompt: str) -> str:
    """Append a user prompt, generate the reply, append it, then truncate.

    On a gateway failure the user message stays in the history and the
    error propagates; the caller records the failure.
    """
    agent.history.append(user(user_prompt))
    reply = gateway.chat(agent.history, agent.params)
    agent.history.append(assistant(reply))
    truncate(agent)
    return reply


def respond_structured(agent: Agent, gateway: Gateway, user_prompt: str,
                       schema: tuple[FieldSpec, ...], retries: int = 2) -> dict[str, Any]:
    """Like :func:`respond`, but the reply must parse into the schema.

    Retry exchanges run on a scratch copy of the history; the agent's own
    history records the prompt plus the canonical JSON of the parsed
    fields. When retries run out only the user prompt remains and the
    error propagates.
    """
    from .gateway import chat_structured

    agent.history.append(user(user_prompt))
    try:
        fields = chat_structured(gateway, agent.history, schema, agent.params, retries)
    except Exception:
        truncate(agent)
        raise
    agent.history.append(assistant(json.dumps(fields)))
    truncate(agent)
    return fields


def next_speaker(roster: Roster, last: DirectedMessage) -> str:
    """Whoever received the last message speaks next (names match exactly)."""
    if len(roster) == 0:
        raise ValueError("roster is empty")
    return roster.by_name(last.to).id

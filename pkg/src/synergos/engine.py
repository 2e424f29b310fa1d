"""Turn-based event loop with a moderator between agents and the world.

The world is an ordered set of named objects (attribute maps) changed only
through registered actions. One turn runs the mediated sequence: inject
retrieved observations, agent asks a question, the moderator answers with
an environment summary and the few actions relevant to the question, the
agent commits to one action, the moderator validates and applies it, the
agent records an observation, the clock advances. Failures are captured in
the turn record; the loop itself never aborts mid-run unless the backend
is gone entirely.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from .agents import Agent, Roster, respond, respond_structured, truncate
from .gateway import (
    BackendUnreachableError,
    FieldSpec,
    Gateway,
    GatewayError,
    user,
)
from .memory import (
    MemoryStore,
    Observation,
    RetrievalParams,
    generate_query,
    record,
    render_observations,
    retrieve,
)

logger = logging.getLogger(__name__)

Scalar = str | int | float | bool

QUESTION_INSTRUCTION = (
    "It is your turn. In one or two sentences, ask the moderator a question "
    "about your environment or about what you should do next."
)
MODERATOR_PROMPT = (
    '{agent} asks: "{question}"\n\n{summary}\n\n'
    "Using only the environment state above, answer the question and tell "
    "{agent} what they could do next."
)
OBSERVATION_PROMPT = (
    "In one short sentence, state the most notable thing you observed about "
    "the environment this turn."
)

ACTION_SCHEMA = (
    FieldSpec("action", kind="string"),
    FieldSpec("args", required=False, kind="list"),
)


@dataclass
class TurnClock:
    """Simulation time in turns; one agent turn advances it by exactly 1."""

    current_turn: int = 0

    def advance(self) -> int:
        self.current_turn += 1
        return self.current_turn


@dataclass
class WorldObject:
    """A named thing in the environment: an attribute-name -> value map."""

    name: str
    attributes: dict[str, Scalar]


@dataclass(frozen=True)
class ActionCall:
    """An agent's committed choice: action name plus positional arguments."""

    name: str
    args: tuple[Scalar, ...] = ()

    def to_json(self) -> dict[str, Any]:
        return {"name": self.name, "args": list(self.args)}


@dataclass
class ActionContext:
    """Everything a handler or guard may touch while running one action."""

    world: "World"
    agent: Agent | None = None
    roster: Roster | None = None
    gateway: Gateway | None = None


Handler = Callable[[ActionContext, list[Scalar]], str]
Guard = Callable[[ActionContext, list[Scalar]], str | None]


@dataclass(frozen=True)
class ActionSpec:
    """A registered action: signature, description, guard, and effect handler.

    ``tags`` limits who sees the action in summaries (empty = everyone).
    """

    name: str
    description: str
    params: tuple[tuple[str, str], ...]
    handler: Handler
    guard: Guard | None = None
    tags: tuple[str, ...] = ()

    def signature(self) -> str:
        args = ", ".join(f"{name}: {kind}" for name, kind in self.params)
        return f"{self.name}({args})"

    def render(self) -> str:
        return f"{self.signature()}: {self.description}"


class World:
    """Ordered objects plus the action registry and the turn clock."""

    def __init__(self) -> None:
        self.objects: dict[str, WorldObject] = {}
        self.registry: dict[str, ActionSpec] = {}
        self.clock = TurnClock()

    def add_object(self, obj: WorldObject) -> WorldObject:
        if obj.name in self.objects:
            raise ValueError(f"duplicate world object: {obj.name!r}")
        self.objects[obj.name] = obj
        return obj

    def obj(self, name: str) -> WorldObject:
        return self.objects[name]

    def register(self, spec: ActionSpec) -> ActionSpec:
        if spec.name in self.registry:
            raise ValueError(f"duplicate action: {spec.name!r}")
        self.registry[spec.name] = spec
        return spec

    def snapshot(self) -> dict[str, dict[str, Scalar]]:
        """Deep copy of every object's attributes, for rollback and equality."""
        return {name: copy.deepcopy(o.attributes) for name, o in self.objects.items()}

    def restore(self, snap: dict[str, dict[str, Scalar]]) -> None:
        for name, attributes in snap.items():
            self.objects[name].attributes = copy.deepcopy(attributes)
        for name in list(self.objects):
            if name not in snap:
                del self.objects[name]


@dataclass(frozen=True)
class TurnOutcome:
    """Full record of one mediated turn, produced even when the turn fails."""

    turn: int
    agent_id: str
    question: str
    moderator_answer: str
    call: ActionCall | None
    validation: str  # "ok" or the error text
    effect: str
    observation_text: str

    @property
    def ok(self) -> bool:
        return self.validation == "ok"

    def to_json(self) -> dict[str, Any]:
        return {
            "turn": self.turn,
            "agent_id": self.agent_id,
            "question": self.question,
            "moderator_answer": self.moderator_answer,
            "call": self.call.to_json() if self.call else None,
            "validation": self.validation,
            "effect": self.effect,
            "observation_text": self.observation_text,
        }


@dataclass(frozen=True)
class EngineConfig:
    max_rounds: int = 12
    action_subset: int = 4
    structured_retries: int = 2
    retrieval: RetrievalParams = field(default_factory=RetrievalParams)

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.action_subset < 1:
            raise ValueError("action_subset must be >= 1")


def _kind_ok(kind: str, value: Scalar) -> bool:
    if kind == "text":
        return isinstance(value, str)
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "boolean":
        return isinstance(value, bool)
    raise ValueError(f"unknown parameter kind: {kind!r}")


def visible_actions(world: World, agent: Agent | None) -> list[ActionSpec]:
    return [
        spec for spec in world.registry.values()
        if not spec.tags or (agent is not None and agent.name in spec.tags)
    ]


def summarize(world: World, agent: Agent | None,
              observations: Sequence[Observation] = (),
              actions: Sequence[ActionSpec] | None = None) -> str:
    """Deterministic rendering of the environment for a prompt.

    Objects with their attributes, then the numbered observation block,
    then the action list (the agent-visible registry unless a selected
    subset is given).
    """
    lines: list[str] = []
    if world.objects:
        lines.append("Environment objects:")
        for obj in world.objects.values():
            attrs = ", ".join(f"{k}={v!r}" for k, v in obj.attributes.items())
            lines.append(f"- {obj.name}: {attrs}")
    else:
        lines.append("The environment contains no objects.")
    block = render_observations(observations)
    if block:
        lines.append("")
        lines.append(block)
    shown = list(actions) if actions is not None else visible_actions(world, agent)
    lines.append("")
    if shown:
        lines.append("Available actions:")
        for spec in shown:
            lines.append(f"- {spec.render()}")
    else:
        lines.append("No actions are available.")
    return "\n".join(lines)


def select_actions(question: str, registry: Mapping[str, ActionSpec] | Sequence[ActionSpec],
                   m: int, gateway: Gateway) -> list[ActionSpec]:
    """The m actions whose descriptions embed closest to the question.

    A registry no bigger than m comes back whole, in registry order; ties
    in similarity also fall back to registry order.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    specs = list(registry.values()) if isinstance(registry, Mapping) else list(registry)
    if len(specs) <= m:
        return specs
    if not question:
        return specs[:m]
    query = gateway.embed(question)
    scored = [
        (query.dot(gateway.embed(spec.description)), index, spec)
        for index, spec in enumerate(specs)
    ]
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [spec for _, _, spec in scored[:m]]


def validate(call: ActionCall, registry: Mapping[str, ActionSpec],
             ctx: ActionContext) -> str | None:
    """None when the call is executable, otherwise the refusal text."""
    spec = registry.get(call.name)
    if spec is None:
        return f"unknown action {call.name!r}"
    if len(call.args) != len(spec.params):
        return (
            f"{spec.signature()} takes {len(spec.params)} argument(s), "
            f"got {len(call.args)}"
        )
    for value, (pname, kind) in zip(call.args, spec.params):
        if not _kind_ok(kind, value):
            return f"argument {pname!r} of {call.name} must be {kind}, got {value!r}"
    if spec.guard is not None:
        return spec.guard(ctx, list(call.args))
    return None


def apply(ctx: ActionContext, call: ActionCall) -> str:
    """Run a validated call's handler; effects persist, faults roll back.

    The returned text is what the moderator relays to the agent. A handler
    fault restores the pre-call world and reports the failure instead of
    raising.
    """
    spec = ctx.world.registry[call.name]
    snap = ctx.world.snapshot()
    try:
        text = spec.handler(ctx, list(call.args))
    except BackendUnreachableError:
        ctx.world.restore(snap)
        raise
    except Exception as exc:  # noqa: BLE001 - handler faults must not kill the loop
        ctx.world.restore(snap)
        logger.warning("handler %s failed, world rolled back: %s", call.name, exc)
        return f"{call.name} failed: {exc}"
    return f"{call.name}: {text}"


def speak(from_agent: Agent, to_agent: Agent, text: str, gateway: Gateway) -> str:
    """Deliver text into the recipient's history and return their immediate reply."""
    reply = respond(to_agent, gateway, f'{from_agent.name} says to you: "{text}"')
    logger.info("%s -> %s: %s / reply: %s", from_agent.name, to_agent.name, text, reply)
    return reply


def _action_instructions(selected: Sequence[ActionSpec]) -> str:
    lines = [
        "You may perform exactly one action this turn. "
        "These are the only actions you are allowed to use:"
    ]
    for spec in selected:
        lines.append(f"- {spec.render()}")
    lines.append(
        'Respond with only a JSON object of the form '
        '{"action": "<action name>", "args": [<argument values>]}. '
        "Do not invent new actions and do not attempt more than one step."
    )
    return "\n".join(lines)


def _generate_observation(agent: Agent, gateway: Gateway, fallback: str) -> str:
    """Ephemeral call: the agent states one observation; history untouched."""
    probe = list(agent.history) + [user(OBSERVATION_PROMPT)]
    try:
        text = gateway.chat(probe, agent.params).strip()
    except BackendUnreachableError:
        raise
    except GatewayError as exc:
        logger.warning("observation generation failed, using effect text: %s", exc)
        text = ""
    return text or fallback


def run_turn(agent: Agent, moderator: Agent, world: World, memory: MemoryStore,
             gateway: Gateway, roster: Roster | None = None,
             config: EngineConfig | None = None) -> TurnOutcome:
    """One agent's full mediated turn.

    Gateway call order (scripted fixtures rely on it):
      1. query generation (agent), only when the agent has stored observations
      2. question (agent)
      3. moderator answer (moderator)
      4. action decision (agent, structured; +2 per parse retry)
      5. recipient reply, only for speak-style actions
      6. observation statement (agent)
      7. importance rating (rater)

    Any stage failure is captured in the outcome; the clock advances and
    histories are truncated regardless. Only an unreachable backend
    propagates.
    """
    config = config or EngineConfig()
    t = world.clock.current_turn
    question = ""
    moderator_answer = ""
    call: ActionCall | None = None
    validation = "ok"
    effect = ""
    observation_text = ""
    try:
        retrieved: list[Observation] = []
        if memory.observations(agent.id):
            query = generate_query(agent, gateway)
            if query:
                retrieved = retrieve(memory, agent.id, query, t,
                                     config.retrieval, gateway)

        block = render_observations(retrieved)
        prompt = f"{block}\n\n{QUESTION_INSTRUCTION}" if block else QUESTION_INSTRUCTION
        question = respond(agent, gateway, prompt)

        visible = visible_actions(world, agent)
        selected = select_actions(question, visible, config.action_subset, gateway)
        summary = summarize(world, agent, retrieved, selected)
        moderator_answer = respond(
            moderator, gateway,
            MODERATOR_PROMPT.format(agent=agent.name, question=question,
                                    summary=summary),
        )
        delivered = f"{moderator_answer}\n\n{_action_instructions(selected)}"

        fields = respond_structured(agent, gateway, delivered, ACTION_SCHEMA,
                                    config.structured_retries)
        args = fields["args"] if fields["args"] is not None else []
        call = ActionCall(fields["action"], tuple(args))

        ctx = ActionContext(world=world, agent=agent, roster=roster,
                            gateway=gateway)
        error = validate(call, world.registry, ctx)
        if error is None:
            effect = apply(ctx, call)
        else:
            validation = error
            effect = f"Action rejected: {error}"
        agent.history.append(user(effect))

        observation_text = _generate_observation(agent, gateway, effect)
        if observation_text:
            try:
                record(memory, agent.id, observation_text, t, gateway,
                       config.retrieval)
            except BackendUnreachableError:
                raise
            except GatewayError as exc:
                logger.warning("observation not recorded: %s", exc)
                observation_text = f"{observation_text} [not recorded]"
    except BackendUnreachableError:
        raise
    except GatewayError as exc:
        logger.warning("turn %d (%s) failed: %s", t, agent.id, exc)
        validation = f"turn failed: {exc}"
        if not effect:
            effect = "The turn could not be completed."

    world.clock.advance()
    truncate(agent)
    truncate(moderator)
    return TurnOutcome(
        turn=t,
        agent_id=agent.id,
        question=question,
        moderator_answer=moderator_answer,
        call=call,
        validation=validation,
        effect=effect,
        observation_text=observation_text,
    )


def run_loop(agents: Roster | Sequence[Agent], moderator: Agent, world: World,
             memory: MemoryStore, gateway: Gateway,
             config: EngineConfig | None = None,
             on_turn: Callable[[TurnOutcome], None] | None = None) -> list[TurnOutcome]:
    """Agents take turns in roster order for max_rounds rounds.

    World changes persist across rounds. ``on_turn`` fires after every
    turn, letting callers stream the transcript to disk as it grows.
    """
    roster = agents if isinstance(agents, Roster) else Roster(list(agents))
    if len(roster) == 0:
        raise ValueError("need at least one agent")
    config = config or EngineConfig()
    transcript: list[TurnOutcome] = []
    for _ in range(config.max_rounds):
        for agent in roster:
            outcome = run_turn(agent, moderator, world, memory, gateway,
                               roster=roster, config=config)
            transcript.append(outcome)
            if on_turn is not None:
                on_turn(outcome)
    return transcript

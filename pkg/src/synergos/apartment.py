"""Studio-apartment scenario: two roommates, a moderator, a small world.

The base world has a thermostat and a shared expense ledger, plus a
moderated channel for the roommates to talk to each other. The cake
variant adds a kitchen and a strict one-step-at-a-time baking chain
(gather ingredients, mix, bake).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .agents import Agent, Roster, new_agent
from .engine import ActionContext, ActionSpec, Scalar, World, WorldObject, speak
from .gateway import GenParams, system

MODERATOR_PERSONA = (
    "You are a moderator that helps an agent interact with their environment."
)
ROOMMATE1_PERSONA = (
    "You are an accountant living in a studio apartment in the city, you have "
    "a roommate. You can talk to your roommate, and interact with the "
    "environment, including speaking with your roommate."
)
ROOMMATE2_PERSONA = (
    "You are an engineer living in a studio apartment in the city, you have "
    "a roommate. You can talk to your roommate, and interact with the "
    "environment, including speaking with your roommate."
)
CAKE_GOAL = (
    " You and your roommate share the explicit goal of baking a cake in the "
    "kitchen, performing only one step at a time as time advances."
)

THERMOSTAT_MIN = 40.0
THERMOSTAT_MAX = 95.0
DEFAULT_THERMOSTAT = 72

INGREDIENTS = ("flour", "sugar", "eggs", "butter", "milk")

DEFAULT_MODERATOR_TEMPERATURE = 0.2
DEFAULT_ROOMMATE_TEMPERATURE = 0.9


@dataclass
class ApartmentScenario:
    world: World
    roster: Roster
    moderator: Agent


def _thermostat(world: World) -> WorldObject:
    return world.obj("thermostat")


def _read_thermostat(ctx: ActionContext, args: list[Scalar]) -> str:
    temp = _thermostat(ctx.world).attributes["temperature"]
    return f"the thermostat is set to {temp} degrees Fahrenheit"


def _set_guard(ctx: ActionContext, args: list[Scalar]) -> str | None:
    value = args[0]
    if not THERMOSTAT_MIN <= float(value) <= THERMOSTAT_MAX:
        return (
            f"thermostat value must be between {THERMOSTAT_MIN:g} and "
            f"{THERMOSTAT_MAX:g} degrees Fahrenheit, got {value!r}"
        )
    return None


def _set_thermostat(ctx: ActionContext, args: list[Scalar]) -> str:
    _thermostat(ctx.world).attributes["temperature"] = args[0]
    return f"the thermostat is now set to {args[0]} degrees Fahrenheit"


def _ledger_entries(world: World) -> list[dict]:
    return json.loads(world.obj("expenses").attributes["entries"])


def _expense_guard(ctx: ActionContext, args: list[Scalar]) -> str | None:
    if float(args[1]) < 0:
        return f"expense amount must not be negative, got {args[1]!r}"
    return None


def _add_expense(ctx: ActionContext, args: list[Scalar]) -> str:
    description, amount = str(args[0]), round(float(args[1]), 2)
    obj = ctx.world.obj("expenses")
    entries = json.loads(obj.attributes["entries"])
    entries.append({"description": description, "amount": amount})
    obj.attributes["entries"] = json.dumps(entries)
    obj.attributes["total"] = round(sum(e["amount"] for e in entries), 2)
    return f"recorded expense '{description}' for ${amount:.2f}"


def _list_expenses(ctx: ActionContext, args: list[Scalar]) -> str:
    entries = _ledger_entries(ctx.world)
    if not entries:
        return "the expense ledger is empty; total $0.00"
    lines = [f"{e['description']}: ${e['amount']:.2f}" for e in entries]
    total = ctx.world.obj("expenses").attributes["total"]
    return "; ".join(lines) + f"; total ${total:.2f}"


def _speak_guard(ctx: ActionContext, args: list[Scalar]) -> str | None:
    to = args[0]
    if ctx.roster is None:
        return "speaking requires a roster"
    if to not in ctx.roster:
        return f"there is no roommate named {to!r}"
    if ctx.agent is not None and to == ctx.agent.name:
        return "you cannot speak to yourself"
    return None


def _speak_to_roommate(ctx: ActionContext, args: list[Scalar]) -> str:
    assert ctx.roster is not None and ctx.agent is not None and ctx.gateway is not None
    to_agent = ctx.roster.by_name(str(args[0]))
    reply = speak(ctx.agent, to_agent, str(args[1]), ctx.gateway)
    return f'{to_agent.name} replied: "{reply}"'


def base_registry() -> list[ActionSpec]:
    return [
        ActionSpec(
            name="read_thermostat",
            description=(
                "Read the current temperature setting of the apartment "
                "thermostat in degrees Fahrenheit."
            ),
            params=(),
            handler=_read_thermostat,
        ),
        ActionSpec(
            name="set_thermostat",
            description=(
                "Set the apartment thermostat temperature to a value in "
                "degrees Fahrenheit between 40 and 95."
            ),
            params=(("value", "number"),),
            handler=_set_thermostat,
            guard=_set_guard,
        ),
        ActionSpec(
            name="add_expense",
            description=(
                "Add an entry to the shared expense spreadsheet: a "
                "description and a dollar amount."
            ),
            params=(("description", "text"), ("amount", "number")),
            handler=_add_expense,
            guard=_expense_guard,
        ),
        ActionSpec(
            name="list_expenses",
            description=(
                "List every entry in the shared expense spreadsheet along "
                "with the running total."
            ),
            params=(),
            handler=_list_expenses,
        ),
        ActionSpec(
            name="speak_to_roommate",
            description=(
                "Say something to your roommate by name and receive their "
                "immediate reply."
            ),
            params=(("to", "text"), ("message", "text")),
            handler=_speak_to_roommate,
            guard=_speak_guard,
        ),
    ]


def _gathered(world: World) -> list[str]:
    obj = world.obj("ingredients")
    return [name for name in INGREDIENTS if obj.attributes[name]]


def _gather_guard(ctx: ActionContext, args: list[Scalar]) -> str | None:
    name = str(args[0]).lower()
    if name not in INGREDIENTS:
        return (
            f"{args[0]!r} is not in the kitchen; the ingredients are "
            f"{', '.join(INGREDIENTS)}"
        )
    if ctx.world.obj("ingredients").attributes[name]:
        return f"the {name} is already gathered"
    return None


def _gather(ctx: ActionContext, args: list[Scalar]) -> str:
    name = str(args[0]).lower()
    ctx.world.obj("ingredients").attributes[name] = True
    return f"you gathered the {name}"


def _mix_guard(ctx: ActionContext, args: list[Scalar]) -> str | None:
    if ctx.world.obj("cake").attributes["mixed"]:
        return "the batter is already mixed"
    missing = [name for name in INGREDIENTS
               if not ctx.world.obj("ingredients").attributes[name]]
    if missing:
        return f"gather every ingredient before mixing; missing: {', '.join(missing)}"
    return None


def _mix(ctx: ActionContext, args: list[Scalar]) -> str:
    ctx.world.obj("cake").attributes["mixed"] = True
    return "you mixed the batter"


def _bake_guard(ctx: ActionContext, args: list[Scalar]) -> str | None:
    cake = ctx.world.obj("cake").attributes
    if not cake["mixed"]:
        return "mix the batter before baking"
    if cake["baked"]:
        return "the cake is already baked"
    return None


def _bake(ctx: ActionContext, args: list[Scalar]) -> str:
    oven = ctx.world.obj("oven").attributes
    oven["on"] = True
    oven["temperature"] = 350
    ctx.world.obj("cake").attributes["baked"] = True
    return "the cake is in the oven and baking at 350 degrees"


def cake_registry() -> list[ActionSpec]:
    return [
        ActionSpec(
            name="gather_ingredient",
            description=(
                "Take one named ingredient from the kitchen shelves so it is "
                "ready for the cake batter."
            ),
            params=(("ingredient", "text"),),
            handler=_gather,
            guard=_gather_guard,
        ),
        ActionSpec(
            name="mix_batter",
            description=(
                "Mix all gathered ingredients into cake batter. Every "
                "ingredient must be gathered first."
            ),
            params=(),
            handler=_mix,
            guard=_mix_guard,
        ),
        ActionSpec(
            name="bake_cake",
            description=(
                "Put the mixed batter in the oven and bake the cake. The "
                "batter must be mixed first."
            ),
            params=(),
            handler=_bake,
            guard=_bake_guard,
        ),
    ]


def build_apartment(history_cap: int = 20,
                    moderator_temperature: float = DEFAULT_MODERATOR_TEMPERATURE,
                    roommate_temperature: float = DEFAULT_ROOMMATE_TEMPERATURE,
                    initial_thermostat: Scalar = DEFAULT_THERMOSTAT,
                    personas: dict[str, str] | None = None) -> ApartmentScenario:
    """The base two-roommate world with thermostat, expenses, and talking.

    The moderator runs cooler than the roommates so it stays procedural
    while they stay exploratory.
    """
    world = World()
    world.add_object(WorldObject("thermostat", {"temperature": initial_thermostat}))
    world.add_object(WorldObject("expenses", {"entries": "[]", "total": 0.0}))
    for spec in base_registry():
        world.register(spec)

    personas = personas or {}
    roster = Roster()
    roster.add(new_agent(
        "Roommate 1", personas.get("Roommate 1", ROOMMATE1_PERSONA),
        GenParams(temperature=roommate_temperature), history_cap,
    ))
    roster.add(new_agent(
        "Roommate 2", personas.get("Roommate 2", ROOMMATE2_PERSONA),
        GenParams(temperature=roommate_temperature), history_cap,
    ))
    moderator = new_agent(
        "Moderator", personas.get("Moderator", MODERATOR_PERSONA),
        GenParams(temperature=moderator_temperature), history_cap,
    )
    return ApartmentScenario(world=world, roster=roster, moderator=moderator)


def build_cake_variant(history_cap: int = 20,
                       moderator_temperature: float = DEFAULT_MODERATOR_TEMPERATURE,
                       roommate_temperature: float = DEFAULT_ROOMMATE_TEMPERATURE,
                       initial_thermostat: Scalar = DEFAULT_THERMOSTAT,
                       personas: dict[str, str] | None = None) -> ApartmentScenario:
    """The apartment plus a kitchen and the gather -> mix -> bake chain.

    Both roommate personas gain the shared goal text; multi-step shortcuts
    are rejected by the step guards rather than trusted to prompting.
    """
    scenario = build_apartment(history_cap, moderator_temperature,
                               roommate_temperature, initial_thermostat, personas)
    world = scenario.world
    world.add_object(WorldObject(
        "ingredients", {name: False for name in INGREDIENTS},
    ))
    world.add_object(WorldObject("oven", {"on": False, "temperature": 0}))
    world.add_object(WorldObject("cake", {"mixed": False, "baked": False}))
    for spec in cake_registry():
        world.register(spec)
    if personas is None:
        for roommate in scenario.roster:
            roommate.persona = roommate.persona + CAKE_GOAL
            roommate.history[0] = system(roommate.persona)
    return scenario

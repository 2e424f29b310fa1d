#!/usr/bin/env python3
"""Scripted walk through the apartment scenario: two mediated rounds.

Shows the full turn machinery offline: observation retrieval, moderator
answers, action validation, the thermostat mutation persisting into the
next round, and the memory store the roommates build up.
"""

import sys

from synergos.apartment import build_apartment
from synergos.engine import EngineConfig, run_loop
from synergos.gateway import ScriptedGateway
from synergos.memory import MemoryStore


def turn(question, answer, action, observation, rating="6", query=None,
         speak_reply=None):
    entries = [] if query is None else [query]
    entries += [question, answer, action]
    if speak_reply is not None:
        entries.append(speak_reply)
    return entries + [observation, rating]


SCRIPT = (
    turn("Is the apartment at a comfortable temperature?",
         "The thermostat is at 72; you could lower it to save on heating.",
         '{"action": "set_thermostat", "args": [68]}',
         "I set the thermostat to 68 degrees.")
    + turn("Do we owe anything this month?",
           "Nothing is tracked yet; you could add the rent.",
           '{"action": "add_expense", "args": ["rent", 1200]}',
           "Rent of $1200 is now tracked in the spreadsheet.", "8")
    + turn("What did I set the thermostat to?",
           "You can read it back from the thermostat.",
           '{"action": "read_thermostat", "args": []}',
           "The thermostat reads 68 degrees.", "4",
           query="what temperature did I choose?")
    + turn("Is my roommate happy with the temperature?",
           "You could ask them directly.",
           '{"action": "speak_to_roommate", '
           '"args": ["Roommate 1", "Is 68 degrees alright with you?"]}',
           "My roommate is fine with 68 degrees.", "5",
           query="does my roommate mind the change?",
           speak_reply="68 works for me, thanks for checking!")
)


def main() -> int:
    scenario = build_apartment()
    memory = MemoryStore()
    gateway = ScriptedGateway(SCRIPT)
    outcomes = run_loop(scenario.roster, scenario.moderator, scenario.world,
                        memory, gateway, EngineConfig(max_rounds=2))
    for outcome in outcomes:
        call = outcome.call.name if outcome.call else "none"
        print(f"[turn {outcome.turn}] {outcome.agent_id}")
        print(f"  question : {outcome.question}")
        print(f"  action   : {call} -> {outcome.validation}")
        print(f"  effect   : {outcome.effect}")
        print(f"  observed : {outcome.observation_text}")
    print("\nfinal world:")
    for obj in scenario.world.objects.values():
        print(f"  {obj.name}: {obj.attributes}")
    print(f"\nobservations stored: {len(memory)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

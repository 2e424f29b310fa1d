import json

import pytest

from synergos.agents import Roster, new_agent
from synergos.engine import (
    ActionCall,
    ActionContext,
    ActionSpec,
    EngineConfig,
    TurnClock,
    World,
    WorldObject,
    apply,
    run_loop,
    run_turn,
    select_actions,
    speak,
    summarize,
    validate,
    visible_actions,
)
from synergos.gateway import GenParams, ScriptedGateway, hash_embedding
from synergos.memory import MemoryStore, Observation
from conftest import fixture_registry, turn_script


def _set_value(ctx, args):
    ctx.world.obj("counter").attributes["value"] = args[0]
    return f"value is now {args[0]}"


def _set_guard(ctx, args):
    if not 0 <= float(args[0]) <= 100:
        return f"value must be in 0..100, got {args[0]!r}"
    return None


def _read_value(ctx, args):
    return f"value is {ctx.world.obj('counter').attributes['value']}"


def _explode(ctx, args):
    ctx.world.obj("counter").attributes["value"] = -999  # must be rolled back
    raise RuntimeError("boom")


def mini_world():
    world = World()
    world.add_object(WorldObject("counter", {"value": 72}))
    world.register(ActionSpec(
        "set_value", "Set the counter to a number between 0 and 100.",
        (("value", "number"),), _set_value, guard=_set_guard))
    world.register(ActionSpec(
        "read_value", "Read the current number stored in the counter.",
        (), _read_value))
    world.register(ActionSpec(
        "explode", "A handler that always faults.", (), _explode))
    return world


def agent(name="Alice", cap=20):
    return new_agent(name, f"You are {name}.", GenParams(temperature=0.9), cap)


class TestSummarize:
    def test_lists_objects_with_attributes(self):
        text = summarize(mini_world(), None)
        assert "counter" in text
        assert "72" in text

    def test_empty_world_still_lists_actions(self):
        world = World()
        world.register(ActionSpec("wave", "Wave at nobody in particular.", (),
                                  lambda ctx, args: "ok"))
        text = summarize(world, None)
        assert "no objects" in text
        assert "wave()" in text

    def test_observations_render_as_numbered_block(self):
        observations = [
            Observation(f"note {i}", 0, 5, hash_embedding(f"note {i}"))
            for i in range(3)
        ]
        text = summarize(mini_world(), None, observations)
        assert "important observations about your situation" in text
        assert "1. note 0" in text
        assert "3. note 2" in text

    def test_action_subset_replaces_full_registry(self):
        world = mini_world()
        subset = [world.registry["read_value"]]
        text = summarize(world, None, (), subset)
        assert "read_value" in text
        assert "set_value" not in text

    def test_visibility_tags_hide_actions(self):
        world = mini_world()
        world.register(ActionSpec("secret", "Only for Bob.", (),
                                  lambda ctx, args: "ok", tags=("Bob",)))
        alice, bob = agent("Alice"), agent("Bob")
        assert "secret" not in summarize(world, alice)
        assert "secret" in summarize(world, bob)
        assert [s.name for s in visible_actions(world, bob)][-1] == "secret"


class TestSelectActions:
    QUESTION = "What temperature is the thermostat set to in the apartment?"

    def test_temperature_question_selects_thermostat_actions(self):
        registry = fixture_registry()
        got = select_actions(self.QUESTION, registry, 2, ScriptedGateway([]))
        assert {s.name for s in got} == {"set_thermostat", "read_thermostat"}

    def test_matches_brute_force_ranking(self):
        registry = fixture_registry()
        gateway = ScriptedGateway([])
        got = select_actions(self.QUESTION, registry, 3, gateway)
        q = gateway.embed(self.QUESTION)
        ranked = sorted(
            enumerate(registry),
            key=lambda pair: (-q.dot(gateway.embed(pair[1].description)), pair[0]),
        )
        assert [s.name for s in got] == [s.name for _, s in ranked[:3]]

    def test_small_registry_returned_whole_in_order(self):
        registry = fixture_registry()
        got = select_actions(self.QUESTION, registry, 10, ScriptedGateway([]))
        assert [s.name for s in got] == [s.name for s in registry]

    def test_empty_registry(self):
        assert select_actions("anything", [], 3, ScriptedGateway([])) == []

    def test_m_must_be_positive(self):
        with pytest.raises(ValueError):
            select_actions("q", fixture_registry(), 0, ScriptedGateway([]))


class TestValidate:
    def ctx(self, world):
        return ActionContext(world=world)

    def test_valid_call(self):
        world = mini_world()
        assert validate(ActionCall("set_value", (72,)), world.registry,
                        self.ctx(world)) is None

    def test_unknown_action(self):
        world = mini_world()
        error = validate(ActionCall("fly_to_moon", ()), world.registry,
                         self.ctx(world))
        assert "unknown action" in error

    def test_kind_mismatch(self):
        world = mini_world()
        error = validate(ActionCall("set_value", ("hot",)), world.registry,
                         self.ctx(world))
        assert "must be number" in error

    def test_arity_mismatch(self):
        world = mini_world()
        error = validate(ActionCall("set_value", (1, 2)), world.registry,
                         self.ctx(world))
        assert "argument" in error

    def test_guard_failure(self):
        world = mini_world()
        error = validate(ActionCall("set_value", (500,)), world.registry,
                         self.ctx(world))
        assert "0..100" in error

    def test_boolean_is_not_a_number(self):
        world = mini_world()
        error = validate(ActionCall("set_value", (True,)), world.registry,
                         self.ctx(world))
        assert error is not None


class TestApply:
    def test_write_then_read(self):
        world = mini_world()
        ctx = ActionContext(world=world)
        apply(ctx, ActionCall("set_value", (68,)))
        effect = apply(ctx, ActionCall("read_value", ()))
        assert "68" in effect

    def test_effect_names_action_and_value(self):
        world = mini_world()
        effect = apply(ActionContext(world=world), ActionCall("set_value", (68,)))
        assert "set_value" in effect
        assert "68" in effect

    def test_faulting_handler_rolls_back(self):
        world = mini_world()
        before = world.snapshot()
        effect = apply(ActionContext(world=world), ActionCall("explode", ()))
        assert "failed" in effect
        assert world.snapshot() == before

    def test_mutation_persists(self):
        world = mini_world()
        apply(ActionContext(world=world), ActionCall("set_value", (5,)))
        assert world.obj("counter").attributes["value"] == 5


class TestSpeak:
    def test_reply_is_returned_and_logged_in_history(self):
        alice, bob = agent("Alice"), agent("Bob")
        gateway = ScriptedGateway(["Sure, it is 72 degrees."])
        reply = speak(alice, bob, "what temperature is it?", gateway)
        assert reply == "Sure, it is 72 degrees."
        assert 'Alice says to you: "what temperature is it?"' == \
            bob.history[-2].content
        assert bob.history[-1].content == reply


class TestTurnClock:
    def test_advance_by_one(self):
        clock = TurnClock(7)
        clock.advance()
        assert clock.current_turn == 8


def run_one_turn(world, script, memory=None, config=None, a=None):
    gateway = ScriptedGateway(script)
    a = a or agent()
    moderator = new_agent("Moderator", "You are a moderator.",
                          GenParams(temperature=0.2))
    memory = memory if memory is not None else MemoryStore()
    outcome = run_turn(a, moderator, world, memory, gateway,
                       roster=Roster([a]), config=config)
    return outcome, gateway, a, memory


class TestRunTurn:
    def test_scripted_read_turn(self):
        world = mini_world()
        outcome, _, _, _ = run_one_turn(world, turn_script(
            question="What is the value?",
            moderator_answer="You could read the counter.",
            action_json='{"action": "read_value", "args": []}',
            observation="The counter holds 72.",
            rating="6",
        ))
        assert outcome.validation == "ok"
        assert outcome.call == ActionCall("read_value", ())
        assert "72" in outcome.effect
        assert outcome.question == "What is the value?"
        assert outcome.observation_text == "The counter holds 72."

    def test_turn_records_observation_in_memory(self):
        world = mini_world()
        _, _, _, memory = run_one_turn(world, turn_script(
            "q?", "answer", '{"action": "read_value", "args": []}',
            "saw the counter", "9"))
        entries = memory.observations("Alice")
        assert len(entries) == 1
        assert entries[0].importance_raw == 9
        assert entries[0].turn == 0

    def test_invalid_action_keeps_world_and_advances_clock(self):
        world = mini_world()
        before = world.snapshot()
        outcome, _, _, _ = run_one_turn(world, turn_script(
            "q?", "answer", '{"action": "fly_to_moon", "args": []}',
            "that went nowhere", "2"))
        assert outcome.validation != "ok"
        assert "unknown action" in outcome.validation
        assert world.snapshot() == before
        assert world.clock.current_turn == 1

    def test_unparseable_action_is_a_failed_turn(self):
        world = mini_world()
        before = world.snapshot()
        script = ["q?", "answer", "gibberish", "more gibberish", "still nothing"]
        outcome, _, _, _ = run_one_turn(world, script)
        assert outcome.validation.startswith("turn failed")
        assert outcome.call is None
        assert world.snapshot() == before
        assert world.clock.current_turn == 1

    def test_clock_advances_from_any_start(self):
        world = mini_world()
        world.clock.current_turn = 7
        outcome, _, _, _ = run_one_turn(world, turn_script(
            "q?", "a", '{"action": "read_value", "args": []}', "obs", "5"))
        assert outcome.turn == 7
        assert world.clock.current_turn == 8

    def test_retrieval_happens_once_memory_exists(self):
        world = mini_world()
        memory = MemoryStore()
        first = turn_script("q1?", "a1", '{"action": "read_value", "args": []}',
                            "obs one", "5")
        second = turn_script("q2?", "a2", '{"action": "read_value", "args": []}',
                             "obs two", "5", query="what did I see?")
        gateway = ScriptedGateway(first + second)
        a = agent()
        moderator = new_agent("Moderator", "mod persona", GenParams())
        run_turn(a, moderator, world, memory, gateway, config=None)
        outcome = run_turn(a, moderator, world, memory, gateway, config=None)
        assert outcome.validation == "ok"
        # the second question prompt carried the injected observation block
        question_call = gateway.chat_calls[6]
        assert "obs one" in question_call[0][-1].content

    def test_effect_is_delivered_into_agent_history(self):
        world = mini_world()
        _, _, a, _ = run_one_turn(world, turn_script(
            "q?", "a", '{"action": "set_value", "args": [42]}', "obs", "5"))
        assert any("value is now 42" in m.content for m in a.history
                   if m.role == "user")


class TestRunLoop:
    def loop_script(self, rounds, agents, action='{"action": "read_value", "args": []}'):
        script = []
        seen = set()
        for r in range(rounds):
            for name in agents:
                query = f"query r{r} {name}" if name in seen else None
                seen.add(name)
                script += turn_script(f"question r{r} {name}", f"answer r{r} {name}",
                                      action, f"obs r{r} {name}", "5", query=query)
        return script

    def test_two_agents_three_rounds_six_outcomes(self):
        world = mini_world()
        roster = Roster([agent("Alice"), agent("Bob")])
        moderator = new_agent("Moderator", "mod", GenParams())
        gateway = ScriptedGateway(self.loop_script(3, ["Alice", "Bob"]))
        transcript = run_loop(roster, moderator, world, MemoryStore(), gateway,
                              EngineConfig(max_rounds=3))
        assert len(transcript) == 6
        assert [o.turn for o in transcript] == list(range(6))
        assert [o.agent_id for o in transcript] == ["Alice", "Bob"] * 3

    def test_mutation_visible_in_next_round_summary(self):
        world = mini_world()
        roster = Roster([agent("Alice")])
        moderator = new_agent("Moderator", "mod", GenParams())
        script = (
            turn_script("set it", "go ahead",
                        '{"action": "set_value", "args": [68]}', "set it to 68", "5")
            + turn_script("read it", "go ahead",
                          '{"action": "read_value", "args": []}', "it reads 68", "5",
                          query="what value?")
        )
        gateway = ScriptedGateway(script)
        run_loop(roster, moderator, world, MemoryStore(), gateway,
                 EngineConfig(max_rounds=2))
        # round 2's moderator prompt summarizes the mutated world
        moderator_prompt = gateway.chat_calls[7][0][-1].content
        assert "value=68" in moderator_prompt

    def test_transcript_is_deterministic(self):
        def one_run():
            world = mini_world()
            roster = Roster([agent("Alice"), agent("Bob")])
            moderator = new_agent("Moderator", "mod", GenParams())
            gateway = ScriptedGateway(self.loop_script(2, ["Alice", "Bob"]))
            transcript = run_loop(roster, moderator, world, MemoryStore(),
                                  gateway, EngineConfig(max_rounds=2))
            return json.dumps([o.to_json() for o in transcript])

        assert one_run() == one_run()

    def test_on_turn_streams_outcomes(self):
        world = mini_world()
        seen = []
        roster = Roster([agent("Alice")])
        moderator = new_agent("Moderator", "mod", GenParams())
        gateway = ScriptedGateway(self.loop_script(1, ["Alice"]))
        run_loop(roster, moderator, world, MemoryStore(), gateway,
                 EngineConfig(max_rounds=1), on_turn=seen.append)
        assert len(seen) == 1
        assert seen[0].agent_id == "Alice"

    def test_needs_at_least_one_agent(self):
        with pytest.raises(ValueError):
            run_loop(Roster(), new_agent("M", "m"), mini_world(), MemoryStore(),
                     ScriptedGateway([]), EngineConfig())

from hypothesis import given, settings, strategies as st

from synergos.apartment import (
    INGREDIENTS,
    MODERATOR_PERSONA,
    build_apartment,
    build_cake_variant,
)
from synergos.engine import ActionCall, ActionContext, apply, validate
from synergos.gateway import ScriptedGateway


def ctx_for(scenario, agent_index=0, gateway=None):
    return ActionContext(
        world=scenario.world,
        agent=scenario.roster[agent_index],
        roster=scenario.roster,
        gateway=gateway,
    )


def run_action(scenario, name, args, agent_index=0, gateway=None):
    ctx = ctx_for(scenario, agent_index, gateway)
    error = validate(ActionCall(name, tuple(args)), scenario.world.registry, ctx)
    if error is not None:
        return error, None
    return None, apply(ctx, ActionCall(name, tuple(args)))


class TestBuildApartment:
    def test_roommate_personas(self):
        scenario = build_apartment()
        assert scenario.roster[0].persona.startswith(
            "You are an accountant living in a studio apartment")
        assert scenario.roster[1].persona.startswith(
            "You are an engineer living in a studio apartment")

    def test_moderator_persona(self):
        scenario = build_apartment()
        assert scenario.moderator.persona == MODERATOR_PERSONA
        assert scenario.moderator.persona == (
            "You are a moderator that helps an agent interact with their "
            "environment.")

    def test_temperature_split(self):
        scenario = build_apartment()
        assert scenario.moderator.params.temperature < \
            scenario.roster[0].params.temperature

    def test_default_thermostat_is_72(self):
        scenario = build_apartment()
        assert scenario.world.obj("thermostat").attributes["temperature"] == 72

    def test_registry_contains_speak_to_roommate(self):
        assert "speak_to_roommate" in build_apartment().world.registry


class TestThermostat:
    def test_set_then_read(self):
        scenario = build_apartment()
        error, _ = run_action(scenario, "set_thermostat", [68])
        assert error is None
        _, effect = run_action(scenario, "read_thermostat", [])
        assert "68" in effect

    def test_fresh_read_is_72(self):
        _, effect = run_action(build_apartment(), "read_thermostat", [])
        assert "72" in effect

    def test_out_of_range_rejected_with_range_in_message(self):
        error, _ = run_action(build_apartment(), "set_thermostat", [30])
        assert error is not None
        assert "40" in error and "95" in error

    def test_reads_reflect_most_recent_set(self):
        scenario = build_apartment()
        for value in (55, 90, 61):
            run_action(scenario, "set_thermostat", [value])
        _, effect = run_action(scenario, "read_thermostat", [])
        assert "61" in effect


class TestExpenses:
    def test_single_entry_ledger(self):
        scenario = build_apartment()
        error, effect = run_action(scenario, "add_expense", ["rent", 1200])
        assert error is None
        _, listing = run_action(scenario, "list_expenses", [])
        assert "rent" in listing
        assert "$1200.00" in listing

    def test_total_is_the_sum(self):
        scenario = build_apartment()
        run_action(scenario, "add_expense", ["rent", 1200])
        run_action(scenario, "add_expense", ["utilities", 89.5])
        assert scenario.world.obj("expenses").attributes["total"] == 1289.5

    def test_negative_amount_rejected(self):
        error, _ = run_action(build_apartment(), "add_expense", ["oops", -5])
        assert error is not None

    @settings(max_examples=30)
    @given(st.lists(st.tuples(st.text("ab", min_size=1, max_size=6),
                              st.integers(0, 500_000)),
                    max_size=20))
    def test_ledger_total_matches_entry_sum(self, items):
        # amounts in cents so the oracle sum is exact
        scenario = build_apartment()
        for description, cents in items:
            error, _ = run_action(scenario, "add_expense",
                                  [description, cents / 100])
            assert error is None
        expected = round(sum(round(cents / 100, 2) for _, cents in items), 2)
        assert scenario.world.obj("expenses").attributes["total"] == expected


class TestSpeakToRoommate:
    def test_mediated_reply(self):
        scenario = build_apartment()
        gateway = ScriptedGateway([
            "The temperature in our apartment is set to 72 degrees Fahrenheit. "
            "No errands are needed today based on my current knowledge."
        ])
        error, effect = run_action(
            scenario, "speak_to_roommate",
            ["Roommate 2", "What is the thermostat set to? Any errands?"],
            agent_index=0, gateway=gateway)
        assert error is None
        assert "72 degrees Fahrenheit" in effect
        assert "Roommate 2 replied" in effect

    def test_self_talk_rejected(self):
        scenario = build_apartment()
        error, _ = run_action(scenario, "speak_to_roommate",
                              ["Roommate 1", "hello me"], agent_index=0)
        assert "yourself" in error

    def test_unknown_recipient_rejected(self):
        scenario = build_apartment()
        error, _ = run_action(scenario, "speak_to_roommate", ["Zed", "hi"])
        assert "no roommate named" in error

    def test_recipient_script_exhausted_becomes_effect_text(self):
        scenario = build_apartment()
        error, effect = run_action(scenario, "speak_to_roommate",
                                   ["Roommate 2", "hello?"],
                                   agent_index=0, gateway=ScriptedGateway([]))
        assert error is None
        assert "failed" in effect
        # world untouched by the failed delivery
        assert scenario.world.obj("thermostat").attributes["temperature"] == 72


class TestCakeVariant:
    def test_oven_starts_off(self):
        scenario = build_cake_variant()
        assert scenario.world.obj("oven").attributes["on"] is False

    def test_goal_appended_to_personas(self):
        scenario = build_cake_variant()
        for roommate in scenario.roster:
            assert "performing only one step at a time" in roommate.persona
            assert roommate.history[0].content == roommate.persona

    def test_gather_twice_reports_already_gathered(self):
        scenario = build_cake_variant()
        error, _ = run_action(scenario, "gather_ingredient", ["flour"])
        assert error is None
        error, _ = run_action(scenario, "gather_ingredient", ["flour"])
        assert "already gathered" in error

    def test_unknown_ingredient_rejected(self):
        error, _ = run_action(build_cake_variant(), "gather_ingredient",
                              ["uranium"])
        assert "not in the kitchen" in error

    def test_bake_before_mix_rejected(self):
        error, _ = run_action(build_cake_variant(), "bake_cake", [])
        assert "mix" in error

    def test_mix_requires_all_ingredients(self):
        scenario = build_cake_variant()
        run_action(scenario, "gather_ingredient", ["flour"])
        error, _ = run_action(scenario, "mix_batter", [])
        assert "missing" in error

    def test_full_chain_bakes_the_cake(self):
        scenario = build_cake_variant()
        for ingredient in INGREDIENTS:
            error, _ = run_action(scenario, "gather_ingredient", [ingredient])
            assert error is None
        error, _ = run_action(scenario, "mix_batter", [])
        assert error is None
        error, effect = run_action(scenario, "bake_cake", [])
        assert error is None
        assert scenario.world.obj("cake").attributes["baked"] is True
        assert scenario.world.obj("oven").attributes["on"] is True

    @settings(max_examples=40)
    @given(st.lists(st.sampled_from(
        [("gather_ingredient", ["flour"]), ("gather_ingredient", ["sugar"]),
         ("gather_ingredient", ["eggs"]), ("gather_ingredient", ["butter"]),
         ("gather_ingredient", ["milk"]), ("mix_batter", []), ("bake_cake", [])]),
        max_size=15))
    def test_no_validated_sequence_bakes_before_mixing(self, calls):
        scenario = build_cake_variant()
        for name, args in calls:
            run_action(scenario, name, args)
            cake = scenario.world.obj("cake").attributes
            assert not (cake["baked"] and not cake["mixed"])

import pytest

from flowforge.catalog import ArtifactKind
from flowforge.dsl import parse_outline, parse_step_inputs
from flowforge.generation import (
    NoTriggerClauseError,
    PromptState,
    ReferenceGenerator,
    run_sub_task,
    segment_requirement,
    reference_create_flow,
    reference_populate_inputs,
)
from flowforge.model import Literal, OutputRef, TriggerEvent
from flowforge.retrieval import query
from tests.conftest import FIG3_REQUIREMENT

FIG45_REQUIREMENT = (
    "Every day, look up incident tasks that do not have assignees and close them"
)


def make_oracle(index):
    def oracle(kind, text, scope):
        return query(index, kind, text, k=4, scope=scope)

    return oracle


class TestSegmentation:
    def test_event_trigger_split(self):
        kind, trigger_clause, clauses = segment_requirement(FIG3_REQUIREMENT)
        assert kind == "event"
        assert trigger_clause == "When a P1 incident is created"
        assert clauses == [
            "look up the user assigned to the incident",
            "if the user has a manager",
            "send an email reminding them of the incident",
        ]

    def test_schedule_trigger_split(self):
        kind, trigger_clause, clauses = segment_requirement(FIG45_REQUIREMENT)
        assert kind == "schedule"
        assert trigger_clause == "Every day"
        assert clauses == [
            "look up incident tasks that do not have assignees",
            "close them",
        ]

    def test_no_cue_raises(self):
        with pytest.raises(NoTriggerClauseError):
            segment_requirement("just do something useful")


class TestCreateFlow:
    def test_fig3_outline(self, catalog, index):
        text = reference_create_flow(FIG3_REQUIREMENT, make_oracle(index), catalog)
        outline = parse_outline(text)
        assert [r.name for r in outline.rows] == ["look_up_record", "IF", "send_email"]
        assert outline.rows[2].block == 2
        assert outline.trigger.table == "incident"
        assert outline.trigger.event is TriggerEvent.CREATED
        assert outline.trigger.condition.encode() == "priority=1"
        assert outline.rows[0].annotation == "look up the user assigned to the incident"

    def test_fig45_outline(self, catalog, index):
        text = reference_create_flow(FIG45_REQUIREMENT, make_oracle(index), catalog)
        outline = parse_outline(text)
        assert outline.trigger.event is TriggerEvent.SCHEDULED
        assert outline.trigger.schedule == "Every day"
        assert [r.name for r in outline.rows] == ["look_up_records", "update_records"]

    def test_determinism_byte_for_byte(self, catalog, index):
        runs = {
            reference_create_flow(FIG3_REQUIREMENT, make_oracle(index), catalog)
            for _ in range(3)
        }
        assert len(runs) == 1

    def test_engine_transcripts_identical(self, catalog, index):
        transcripts = []
        for _ in range(2):
            state = PromptState.for_create_flow(FIG3_REQUIREMENT)
            result = run_sub_task(ReferenceGenerator(catalog), state, index)
            transcripts.append(result.transcript)
        assert transcripts[0] == transcripts[1]


class TestPopulateInputs:
    def _populate(self, catalog, index, requirement, target_index, earlier=()):
        text = reference_create_flow(requirement, make_oracle(index), catalog)
        outline = parse_outline(text)
        state = PromptState.for_populate_inputs(
            requirement, outline, earlier, outline.rows[target_index]
        )
        return parse_step_inputs(
            reference_populate_inputs(state, make_oracle(index), catalog)
        ), outline

    def test_fig3_lookup_inputs(self, catalog, index):
        inputs, _ = self._populate(catalog, index, FIG3_REQUIREMENT, 0)
        by_name = {iv.name: iv.value for iv in inputs}
        assert by_name["table"] == Literal("sys_user")
        condition = by_name["condition"]
        assert condition.encode() == "sys_id={{trigger.record.assigned_to}}"

    def test_fig3_if_condition(self, catalog, index):
        from flowforge.model import Step, StepInputValue

        earlier = [
            Step(
                "look_up_record",
                "look up the user assigned to the incident",
                1,
                inputs=(StepInputValue("table", Literal("sys_user")),),
            )
        ]
        inputs, _ = self._populate(catalog, index, FIG3_REQUIREMENT, 1, earlier)
        by_name = {iv.name: iv.value for iv in inputs}
        assert by_name["record"] == OutputRef(1, "record")
        assert by_name["condition"].encode() == "managerISNOTEMPTY"

    def test_fig45_close_step(self, catalog, index):
        from flowforge.model import Step, StepInputValue

        earlier = [
            Step(
                "look_up_records",
                "look up incident tasks that do not have assignees",
                1,
                inputs=(StepInputValue("table", Literal("incident_task")),),
            )
        ]
        inputs, _ = self._populate(catalog, index, FIG45_REQUIREMENT, 1, earlier)
        by_name = {iv.name: iv.value for iv in inputs}
        assert by_name["records"] == OutputRef(1, "records")
        assert by_name["values"].encode() == "state=3"

    def test_step_without_declared_inputs_is_empty(self, catalog, index):
        # FOREACH has one declared input; use a synthetic unknown-step row to
        # exercise the empty path.
        from flowforge.model import Outline, OutlineRow, Trigger

        outline = Outline(
            trigger=Trigger(event=TriggerEvent.SCHEDULED, schedule="daily"),
            rows=(OutlineRow("mystery_step", "do something", 1),),
        )
        state = PromptState.for_populate_inputs("daily, x", outline, [], outline.rows[0])
        calls = []

        def counting_oracle(kind, text, scope):
            calls.append(kind)
            return query(index, kind, text, k=4, scope=scope)

        text = reference_populate_inputs(state, counting_oracle, catalog)
        assert parse_step_inputs(text) == ()
        assert calls == []

    def test_parallel_mode_rederives_table_from_outline(self, catalog, index):
        # No earlier populated steps: the update step re-derives the lookup
        # table from the outline annotation alone.
        inputs, _ = self._populate(catalog, index, FIG45_REQUIREMENT, 1, earlier=())
        by_name = {iv.name: iv.value for iv in inputs}
        assert by_name["values"].encode() == "state=3"

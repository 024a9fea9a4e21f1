import random

from flowforge.dsl import parse_workflow, serialize_workflow
from flowforge.model import (
    Conjunct,
    ConditionExpr,
    Literal,
    Operator,
    OutputRef,
    Step,
    StepInputValue,
    Trigger,
    TriggerEvent,
    Workflow,
)
from flowforge.validate import ViolationCode, validate_workflow
from tests.genutil import build_random_workflow


def _replace_step(workflow: Workflow, index: int, **changes) -> Workflow:
    import dataclasses

    steps = list(workflow.steps)
    steps[index] = dataclasses.replace(steps[index], **changes)
    return dataclasses.replace(workflow, steps=tuple(steps))


class TestValid:
    def test_fig3_is_clean(self, fig3_workflow, catalog):
        report = validate_workflow(fig3_workflow, catalog)
        assert report.ok, report.violations

    def test_random_workflows_are_clean(self, catalog):
        rng = random.Random(7)
        for _ in range(50):
            w = build_random_workflow(rng, catalog)
            report = validate_workflow(w, catalog)
            assert report.ok, (report.violations, serialize_workflow(w))


class TestViolations:
    def test_unknown_step(self, fig3_workflow, catalog):
        w = _replace_step(fig3_workflow, 2, name="send_emial")
        report = validate_workflow(w, catalog)
        assert ViolationCode.UNKNOWN_STEP in report.codes()

    def test_unknown_table_in_trigger(self, fig3_workflow, catalog):
        import dataclasses

        w = dataclasses.replace(
            fig3_workflow,
            trigger=Trigger(event=TriggerEvent.CREATED, table="userz"),
        )
        assert ViolationCode.UNKNOWN_TABLE in validate_workflow(w, catalog).codes()

    def test_unknown_table_in_input(self, fig3_workflow, catalog):
        step = fig3_workflow.steps[0]
        inputs = (StepInputValue("table", Literal("userz")),) + step.inputs[1:]
        w = _replace_step(fig3_workflow, 0, inputs=inputs)
        assert ViolationCode.UNKNOWN_TABLE in validate_workflow(w, catalog).codes()

    def test_unknown_column_in_trigger_condition(self, fig3_workflow, catalog):
        import dataclasses

        trigger = dataclasses.replace(
            fig3_workflow.trigger,
            condition=ConditionExpr((Conjunct("priorty", Operator.EQ, "1"),)),
        )
        w = dataclasses.replace(fig3_workflow, trigger=trigger)
        assert ViolationCode.UNKNOWN_COLUMN in validate_workflow(w, catalog).codes()

    def test_unknown_column_via_reference_context(self, fig3_workflow, catalog):
        # IF at order 2 references step 1 (a sys_user lookup); its condition
        # columns resolve against sys_user.
        step = fig3_workflow.steps[1]
        inputs = (
            step.inputs[0],
            StepInputValue(
                "condition", ConditionExpr((Conjunct("managr", Operator.ISNOTEMPTY),))
            ),
        )
        w = _replace_step(fig3_workflow, 1, inputs=inputs)
        assert ViolationCode.UNKNOWN_COLUMN in validate_workflow(w, catalog).codes()

    def test_forward_ref(self, fig3_workflow, catalog):
        step = fig3_workflow.steps[0]
        inputs = (
            step.inputs[0],
            StepInputValue("condition", ConditionExpr((Conjunct("sys_id", Operator.EQ, "{{3.record}}"),))),
        )
        w = _replace_step(fig3_workflow, 0, inputs=inputs)
        assert ViolationCode.FORWARD_REF in validate_workflow(w, catalog).codes()

    def test_self_ref_is_forward(self, fig3_workflow, catalog):
        inputs = (
            StepInputValue("record", OutputRef(2, "record")),
            fig3_workflow.steps[1].inputs[1],
        )
        w = _replace_step(fig3_workflow, 1, inputs=inputs)
        assert ViolationCode.FORWARD_REF in validate_workflow(w, catalog).codes()

    def test_bad_block_not_flow_control(self, fig3_workflow, catalog):
        w = _replace_step(fig3_workflow, 2, block=1)
        assert ViolationCode.BAD_BLOCK in validate_workflow(w, catalog).codes()

    def test_bad_block_missing_parent(self, fig3_workflow, catalog):
        w = _replace_step(fig3_workflow, 2, block=9)
        assert ViolationCode.BAD_BLOCK in validate_workflow(w, catalog).codes()

    def test_order_gap(self, fig3_workflow, catalog):
        w = _replace_step(fig3_workflow, 2, order=5, block=0)
        assert ViolationCode.ORDER_GAP in validate_workflow(w, catalog).codes()

    def test_unknown_input_name(self, fig3_workflow, catalog):
        step = fig3_workflow.steps[2]
        inputs = step.inputs + (StepInputValue("cc", Literal("nobody")),)
        w = _replace_step(fig3_workflow, 2, inputs=inputs)
        assert ViolationCode.UNKNOWN_INPUT_NAME in validate_workflow(w, catalog).codes()

    def test_missing_required_input(self, fig3_workflow, catalog):
        w = _replace_step(fig3_workflow, 2, inputs=fig3_workflow.steps[2].inputs[1:])
        assert ViolationCode.MISSING_REQUIRED_INPUT in validate_workflow(w, catalog).codes()

    def test_bad_output_path(self, fig3_workflow, catalog):
        inputs = (
            StepInputValue("record", OutputRef(1, "rekord")),
            fig3_workflow.steps[1].inputs[1],
        )
        w = _replace_step(fig3_workflow, 1, inputs=inputs)
        assert ViolationCode.BAD_OUTPUT_PATH in validate_workflow(w, catalog).codes()

    def test_scheduled_trigger_record_ref_is_bad_path(self, catalog):
        w = Workflow(
            trigger=Trigger(event=TriggerEvent.SCHEDULED, schedule="daily"),
            steps=(
                Step(
                    name="log_message",
                    order=1,
                    inputs=(StepInputValue("message", OutputRef("trigger", "record")),),
                ),
            ),
        )
        assert ViolationCode.BAD_OUTPUT_PATH in validate_workflow(w, catalog).codes()

    def test_violations_carry_location(self, fig3_workflow, catalog):
        w = _replace_step(fig3_workflow, 2, name="send_emial")
        report = validate_workflow(w, catalog)
        assert any(v.location == "steps[2]" for v in report.violations)

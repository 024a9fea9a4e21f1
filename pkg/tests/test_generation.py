import pytest

from flowforge.catalog import ArtifactKind
from flowforge.generation import (
    BudgetExceededError,
    ChoicesRequest,
    ConstraintViolationError,
    Done,
    Fragment,
    GeneratorFaultError,
    PromptState,
    ScriptedGenerator,
    SubTask,
    TeacherForcingConfig,
    TranscriptEntry,
    choices_from_transcript,
    constrain_output,
    events_from_transcript,
    is_well_bracketed,
    load_transcript,
    parse_sentinel_text,
    run_sub_task,
    save_transcript,
)
from flowforge.generation.engine import SubTaskCancelled
from flowforge.model import Outline, OutlineRow, Trigger, TriggerEvent

OUTLINE_TEXT = (
    "trigger:\n  table: incident\n  event: created\n"
    "steps:\n- name: look_up_record\n  annotation: look up the user\n  order: 1\n"
)

SCRIPT = [
    Fragment("trigger:\n  table: incident\n  event: created\n"),
    Fragment("steps:\n"),
    ChoicesRequest(ArtifactKind.STEP_NAME, "look up the user"),
    Fragment("- name: look_up_record\n  annotation: look up the user\n  order: 1\n"),
    ChoicesRequest(ArtifactKind.TABLE_NAME, "look up the user"),
    Done(),
]


class TestRunSubTask:
    def test_replay_is_deterministic(self, index):
        results = []
        for _ in range(2):
            state = PromptState.for_create_flow("When an incident is created, look up the user")
            result = run_sub_task(ScriptedGenerator(SCRIPT), state, index)
            results.append(result)
        assert results[0].text == results[1].text == OUTLINE_TEXT
        assert results[0].retrieval_call_count == 2
        assert results[0].transcript == results[1].transcript

    def test_transcript_well_bracketed(self, index):
        state = PromptState.for_create_flow("anything at all")
        result = run_sub_task(ScriptedGenerator(SCRIPT), state, index)
        assert is_well_bracketed(result.transcript)

    def test_retrieval_count_equals_requests(self, index):
        state = PromptState.for_create_flow("anything at all")
        result = run_sub_task(ScriptedGenerator(SCRIPT), state, index)
        requests = [e for e in result.transcript if e.type == "choices_request"]
        assert result.retrieval_call_count == len(requests) == 2

    def test_teacher_forcing_injects_missed_gold(self, index):
        tf = TeacherForcingConfig(enabled=True, gold=("send_email", "incident"))
        state = PromptState.for_create_flow("anything at all")
        result = run_sub_task(ScriptedGenerator(SCRIPT), state, index, k=4, tf=tf)
        for site, gold in zip(result.choices_per_site, ("send_email", "incident")):
            assert gold in site.payloads
            assert len(site.choices) <= 4
            scores = [c.score for c in site.choices]
            assert scores == sorted(scores, reverse=True)

    def test_teacher_forcing_leaves_hits_alone(self, index):
        tf = TeacherForcingConfig(enabled=True, gold=("look_up_record",))
        state = PromptState.for_create_flow("anything at all")
        result = run_sub_task(ScriptedGenerator(SCRIPT), state, index, tf=tf)
        site = result.choices_per_site[0]
        assert not any(c.forced for c in site.choices)

    def test_budget_exceeded(self, index):
        endless = ScriptedGenerator([Fragment("x")] * 50)
        endless._events = [Fragment("x")] * 50  # no Done among first 10
        state = PromptState.for_create_flow("anything")
        with pytest.raises(BudgetExceededError):
            run_sub_task(ScriptedGenerator([Fragment("x")] * 50), state, index, budget=10)

    def test_generator_fault_on_empty_query(self, index):
        bad = ScriptedGenerator([ChoicesRequest(ArtifactKind.STEP_NAME, ""), Done()])
        state = PromptState.for_create_flow("anything")
        with pytest.raises(GeneratorFaultError):
            run_sub_task(bad, state, index)

    def test_generator_fault_on_unparseable_output(self, index):
        bad = ScriptedGenerator([Fragment("not: [valid outline"), Done()])
        state = PromptState.for_create_flow("anything")
        with pytest.raises(GeneratorFaultError):
            run_sub_task(bad, state, index)

    def test_retrieval_failure_injects_empty_and_continues(self, catalog, index):
        # A column request without scope makes the retriever raise; the
        # engine injects an empty list and generation completes.
        script = [
            ChoicesRequest(ArtifactKind.COLUMN_NAME, "whatever", scope=None),
            Fragment(OUTLINE_TEXT),
            Done(),
        ]
        state = PromptState.for_create_flow("anything")
        result = run_sub_task(ScriptedGenerator(script), state, index)
        assert result.retrieval_call_count == 1
        site = result.choices_per_site[0]
        assert site.choices == ()
        injected = [e for e in result.transcript if e.type == "choices_injected"]
        assert injected[0].data["retrieval_failed"] is True

    def test_abort_at_event_boundary(self, index):
        state = PromptState.for_create_flow("anything")
        with pytest.raises(SubTaskCancelled):
            run_sub_task(
                ScriptedGenerator(SCRIPT), state, index, should_abort=lambda: True
            )

    def test_populate_context_rejects_forward_steps(self):
        outline = Outline(
            trigger=Trigger(event=TriggerEvent.SCHEDULED, schedule="daily"),
            rows=(OutlineRow("log_message", "log", 1), OutlineRow("log_message", "log", 2)),
        )
        from flowforge.model import Step

        with pytest.raises(ValueError):
            PromptState.for_populate_inputs(
                "req", outline, [Step("log_message", "", 2)], outline.rows[0]
            )


class TestTranscripts:
    def test_save_load_round_trip(self, index, tmp_path):
        state = PromptState.for_create_flow("anything")
        result = run_sub_task(ScriptedGenerator(SCRIPT), state, index)
        path = tmp_path / "t.jsonl"
        save_transcript(result.transcript, path)
        loaded = load_transcript(path)
        assert loaded == list(result.transcript)

    def test_replay_from_transcript(self, index, tmp_path):
        state = PromptState.for_create_flow("anything")
        result = run_sub_task(ScriptedGenerator(SCRIPT), state, index)
        replayed = ScriptedGenerator.from_transcript(result.transcript)
        state2 = PromptState.for_create_flow("anything")
        result2 = run_sub_task(replayed, state2, index)
        assert result2.text == result.text
        assert result2.transcript == result.transcript

    def test_choices_extraction(self, index):
        state = PromptState.for_create_flow("anything")
        result = run_sub_task(ScriptedGenerator(SCRIPT), state, index)
        extracted = choices_from_transcript(result.transcript)
        assert extracted == list(result.choices_per_site)

    def test_bracket_checker_rejects_orphan_request(self):
        bad = [
            TranscriptEntry("choices_request", {"kind": "step_name", "query": "x", "scope": None}),
            TranscriptEntry("fragment", {"text": "y"}),
        ]
        assert not is_well_bracketed(bad)


class TestSentinelText:
    def test_parses_sentinel_lines(self):
        text = (
            "trigger:\n  table: incident\n  event: created\n"
            "choices: step_name | look up the user\n"
            "steps:\n- name: look_up_record\n  order: 1\n"
        )
        events = parse_sentinel_text(text)
        kinds = [type(e).__name__ for e in events]
        assert kinds == ["Fragment", "ChoicesRequest", "Fragment", "Done"]
        request = events[1]
        assert request.query == "look up the user"

    def test_scoped_sentinel(self):
        events = parse_sentinel_text("choices: column_name@incident | the priority\n")
        assert events[0].scope == "incident"


class TestConstrainOutput:
    def _result(self, index, text, script=None):
        state = PromptState.for_create_flow("anything")
        events = script or [Fragment(text), Done()]
        return run_sub_task(ScriptedGenerator(events), state, index)

    def test_grounded_output_unchanged(self, catalog, index):
        script = [
            Fragment("trigger:\n  table: incident\n  event: created\n"),
            Fragment("steps:\n"),
            ChoicesRequest(ArtifactKind.STEP_NAME, "look up the user"),
            Fragment("- name: look_up_record\n  annotation: look up the user\n  order: 1\n"),
            Done(),
        ]
        result = self._result(index, "", script)
        constrained = constrain_output(result, catalog=catalog)
        assert constrained.text == result.text
        assert constrained.constraint_violations == ()

    def test_fabricated_step_repaired_to_top_choice(self, catalog, index):
        script = [
            Fragment("trigger:\n  table: incident\n  event: created\n"),
            Fragment("steps:\n"),
            ChoicesRequest(ArtifactKind.STEP_NAME, "send an email reminding them"),
            Fragment("- name: send_emial\n  order: 1\n"),
            Done(),
        ]
        result = self._result(index, "", script)
        constrained = constrain_output(result, catalog=catalog, repair_mode=True)
        assert "send_emial" not in constrained.text
        assert len(constrained.constraint_violations) == 1
        assert constrained.constraint_violations[0].repaired_to == "send_email"

    def test_reject_mode_raises(self, catalog, index):
        script = [
            Fragment("trigger:\n  table: incident\n  event: created\n"),
            Fragment("steps:\n"),
            ChoicesRequest(ArtifactKind.STEP_NAME, "send an email"),
            Fragment("- name: send_emial\n  order: 1\n"),
            Done(),
        ]
        result = self._result(index, "", script)
        with pytest.raises(ConstraintViolationError):
            constrain_output(result, catalog=catalog, repair_mode=False)

    def test_fabricated_table_repaired(self, catalog, index):
        state = PromptState.for_populate_inputs(
            "req",
            Outline(
                trigger=Trigger(event=TriggerEvent.CREATED, table="incident"),
                rows=(OutlineRow("look_up_record", "look up the user", 1),),
            ),
            [],
            OutlineRow("look_up_record", "look up the user", 1),
        )
        script = [
            ChoicesRequest(ArtifactKind.TABLE_NAME, "look up the user"),
            Fragment("inputs:\n- name: table\n  value: userz\n"),
            Done(),
        ]
        result = run_sub_task(ScriptedGenerator(script), state, index)
        constrained = constrain_output(result, catalog=catalog, repair_mode=True)
        assert "userz" not in constrained.text
        assert constrained.constraint_violations[0].token == "userz"

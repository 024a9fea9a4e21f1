"""Deterministic rule-based generator for both sub-tasks.

This is the built-in stand-in for a fine-tuned model: it segments the
requirement into clauses on cue words, maps clauses to steps through
choices requests, and populates declared inputs kind by kind. It exists to
exercise the protocol end to end and to produce reproducible golden
corpora; identical catalog and requirement always yield byte-identical
output. Artifact names are only ever taken from injected choices; the
catalog is consulted solely for declared input/output names, which the
platform fixes anyway.
"""

from __future__ import annotations

import re
from typing import Callable

from ..catalog import ArtifactKind, EnvironmentCatalog, StepDefinition, ValueKind
from ..dsl import serialize_step_inputs, serialize_step_row, serialize_trigger_block
from ..model import (
    Composite,
    Conjunct,
    ConditionExpr,
    Literal,
    Operator,
    Outline,
    OutlineRow,
    OutputRef,
    Step,
    StepInputValue,
    Trigger,
    TriggerEvent,
)
from ..retrieval import RankedChoices, fold_plural, normalize
from .events import ChoicesRequest, Fragment, PromptState, SubTask
from .generators import Pipeline, PipelineGenerator, register_generator

# Acceptance floors for retrieved artifacts. The table floor is the
# documented epsilon below which a table is considered unresolved; the
# column/value gates decide whether an annotation implies a condition at
# all, with a margin test to reject ambiguous noise.
TABLE_SCORE_FLOOR = 0.05
COLUMN_SCORE_GATE = 0.15
VALUE_SCORE_GATE = 0.15
VALUE_MARGIN = 1.5

SCHEDULE_CUES = (
    "every morning",
    "every day",
    "every week",
    "every month",
    "every hour",
    "daily",
    "weekly",
    "monthly",
)
CREATED_CUES = ("created", "opened", "submitted", "logged", "raised", "reported", "filed")
UPDATED_CUES = ("updated", "changed", "modified", "reassigned", "edited")
EMPTY_CUES = (
    "do not have",
    "does not have",
    "don't have",
    "without",
    "has no",
    "have no",
    "is empty",
    "are empty",
    "is not set",
)
NOT_EMPTY_CUES = ("has a", "has an", "have a", "have an", "with a", "with an", "is set")

# Reference inputs whose path gets a column suffix when the annotation
# points at one (send_email.to -> record.email and the like).
ADDRESSEE_INPUTS = ("to", "recipient", "approver", "assigned_to")

_CLAUSE_SPLIT_RE = re.compile(
    r",\s+and\s+then\s+|,\s+then\s+|,\s+and\s+|\s+and\s+then\s+|\s+then\s+|,\s+|\s+and\s+"
)

# Table queries use the head of the clause: "look up the user assigned to
# the incident" names a user lookup, so the query stops before the
# trailing qualifier.
_TABLE_QUERY_CUTS = (" to ", " of ", " in ", " for ", " from ", " about ", " that ", " which ", " who ")


def _table_query(annotation: str) -> str:
    lowered = annotation.lower()
    cut = min(
        (lowered.find(cue) for cue in _TABLE_QUERY_CUTS if cue in lowered),
        default=-1,
    )
    return annotation[:cut].strip() if cut > 0 else annotation


def _scoped_query(annotation: str, table: str) -> str:
    """Column/value queries drop the scoping table's own name tokens; the
    table is already decided and its tokens carry no column or value signal
    ("a P1 incident" qualifies by P1, not by incident)."""
    table_tokens = set(normalize(table).split())
    kept = [
        word
        for word in annotation.split()
        if fold_plural(normalize(word)) not in table_tokens
    ]
    return " ".join(kept)


class NoTriggerClauseError(ValueError):
    """The requirement has no recognizable trigger cue."""


class UnresolvedTableError(RuntimeError):
    """No table choice scored above the acceptance floor."""


class UnresolvedReferenceError(RuntimeError):
    """A required reference input has no earlier step to point at."""


class UnresolvedValueError(RuntimeError):
    """A required condition input found no usable column or value signal."""


def segment_requirement(requirement: str) -> tuple[str, str, list[str]]:
    """Split a requirement into (trigger kind, trigger clause, step clauses).

    The trigger kind is "schedule" or "event". Raises
    :class:`NoTriggerClauseError` when no cue introduces the text.
    """
    text = " ".join(requirement.split())
    lowered = text.lower()
    for cue in SCHEDULE_CUES:
        if lowered.startswith(cue):
            rest = text[len(cue):].lstrip(" ,")
            return "schedule", text[: len(cue)], _split_clauses(rest)
    if lowered.startswith("when ") or lowered.startswith("whenever "):
        comma = text.find(",")
        if comma == -1:
            raise NoTriggerClauseError(
                "trigger clause must be separated from the steps by a comma"
            )
        return "event", text[:comma], _split_clauses(text[comma + 1:].strip())
    raise NoTriggerClauseError(f"no trigger cue found in {requirement!r}")


def _split_clauses(text: str) -> list[str]:
    return [c.strip() for c in _CLAUSE_SPLIT_RE.split(text) if c.strip()]


def _accept_top(ranked: RankedChoices, floor: float) -> str | None:
    top = ranked.top
    if top is None or top.score < floor:
        return None
    return top.payload


def _accept_value(ranked: RankedChoices) -> tuple[str, str] | None:
    """Accept the top column=value choice only with a clear margin."""
    top = ranked.top
    if top is None or top.score < VALUE_SCORE_GATE or "=" not in top.payload:
        return None
    if len(ranked.choices) > 1:
        second = ranked.choices[1].score
        if second > 0 and top.score < VALUE_MARGIN * second:
            return None
    column, _, value = top.payload.partition("=")
    return column, value


def _event_kind(clause: str) -> TriggerEvent:
    lowered = clause.lower()
    if any(cue in lowered for cue in UPDATED_CUES):
        return TriggerEvent.UPDATED
    return TriggerEvent.CREATED


def create_flow_pipeline(state: PromptState, catalog: EnvironmentCatalog) -> Pipeline:
    """Outline generation: trigger from the trigger clause, one step per
    remaining clause, conditional clauses opening an IF block."""
    kind, trigger_clause, clauses = segment_requirement(state.requirement)

    if kind == "schedule":
        trigger = Trigger(event=TriggerEvent.SCHEDULED, schedule=trigger_clause)
    else:
        ranked = yield ChoicesRequest(ArtifactKind.TABLE_NAME, trigger_clause)
        table = _accept_top(ranked, TABLE_SCORE_FLOOR)
        if table is None:
            raise UnresolvedTableError(f"no table for trigger clause {trigger_clause!r}")
        condition = None
        ranked = yield ChoicesRequest(
            ArtifactKind.COLUMN_VALUE, _scoped_query(trigger_clause, table), scope=table
        )
        accepted = _accept_value(ranked)
        if accepted is not None:
            column, value = accepted
            condition = ConditionExpr((Conjunct(column, Operator.EQ, value),))
        trigger = Trigger(event=_event_kind(trigger_clause), table=table, condition=condition)

    yield Fragment(serialize_trigger_block(trigger))
    if clauses:
        yield Fragment("steps:\n")
    block = 0
    for order, clause in enumerate(clauses, start=1):
        if clause.lower().startswith("if "):
            row = OutlineRow("IF", clause, order, block)
            block = order
        else:
            ranked = yield ChoicesRequest(ArtifactKind.STEP_NAME, clause)
            top = ranked.top
            if top is None:
                raise UnresolvedTableError(f"no step choices for clause {clause!r}")
            row = OutlineRow(top.payload, clause, order, block)
        yield Fragment(serialize_step_row(row))


def _sources(state: PromptState) -> list[tuple[int | str, str, str | None, str]]:
    """Referencable outputs before the target step, latest first:
    (step_ref, output name, table if known, annotation)."""
    assert state.outline is not None and state.target_row is not None
    populated = {s.order: s for s in state.earlier_steps}
    out: list[tuple[int | str, str, str | None, str]] = []
    for row in state.outline.rows:
        if row.order >= state.target_row.order:
            break
        step = populated.get(row.order)
        table = None
        if step is not None:
            for iv in step.inputs:
                if iv.name == "table" and isinstance(iv.value, Literal):
                    table = iv.value.text
                    break
        out.append((row.order, row.name, table, row.annotation))
    trigger = state.outline.trigger
    result: list[tuple[int | str, str, str | None, str]] = []
    for order, name, table, annotation in reversed(out):
        result.append((order, name, table, annotation))
    if trigger.outputs:
        result.append(("trigger", "", trigger.table, ""))
    return result


def populate_inputs_pipeline(state: PromptState, catalog: EnvironmentCatalog) -> Pipeline:
    """Input generation for one step, driven by its declared input kinds."""
    row = state.target_row
    assert row is not None
    definition = catalog.step(row.name)
    annotation = row.annotation or row.name
    if definition is None or not definition.inputs:
        yield Fragment("inputs: []\n")
        return

    sources = _sources(state)
    inputs: list[StepInputValue] = []
    resolved_table: str | None = None
    ref_source: tuple[int | str, str, str | None, str] | None = None

    emitted_header = False
    for decl in definition.inputs:
        value = None
        if decl.kind is ValueKind.TABLE:
            ranked = yield ChoicesRequest(ArtifactKind.TABLE_NAME, _table_query(annotation))
            table = _accept_top(ranked, TABLE_SCORE_FLOOR)
            if table is None:
                if decl.required:
                    raise UnresolvedTableError(f"no table for annotation {annotation!r}")
                continue
            resolved_table = table
            value = Literal(table)
        elif decl.kind is ValueKind.REFERENCE:
            source = _pick_source(sources, catalog)
            if source is None:
                if decl.required:
                    raise UnresolvedReferenceError(
                        f"step {row.name!r} needs an earlier output to reference"
                    )
                continue
            ref_source = source
            step_ref, step_name, source_table, _ = source
            base = _base_output(step_ref, step_name, catalog)
            path = base
            if decl.name in ADDRESSEE_INPUTS and source_table is not None:
                ranked = yield ChoicesRequest(
                    ArtifactKind.COLUMN_NAME,
                    _scoped_query(annotation, source_table),
                    scope=source_table,
                )
                column = _accept_top(ranked, COLUMN_SCORE_GATE)
                if column is not None:
                    path = f"{base}.{column}"
            value = OutputRef(step_ref, path)
        elif decl.kind is ValueKind.CONDITION:
            table = resolved_table
            if table is None:
                source = ref_source or _pick_source(sources, catalog)
                if source is not None:
                    table = source[2]
                    if table is None and source[3]:
                        # Outline-only context: re-derive the source's table
                        # from its annotation.
                        ranked = yield ChoicesRequest(
                            ArtifactKind.TABLE_NAME, _table_query(source[3])
                        )
                        table = _accept_top(ranked, TABLE_SCORE_FLOOR)
            if table is None:
                if decl.required:
                    raise UnresolvedTableError(
                        f"no table context for condition input of {row.name!r}"
                    )
                continue
            condition = yield from _build_condition(annotation, table)
            if condition is None and not decl.required:
                # Single-record lookups with no filter signal often select
                # by a relation to the triggering record ("the user assigned
                # to the incident"): join on the platform key.
                condition = yield from _join_condition(
                    annotation, state.outline.trigger if state.outline else None
                )
            if condition is None:
                if decl.required:
                    raise UnresolvedValueError(
                        f"no condition signal in annotation {annotation!r}"
                    )
                continue
            value = condition
        elif decl.kind is ValueKind.EMAIL_BODY:
            source = ref_source or _pick_source(sources, catalog)
            if source is not None:
                step_ref, step_name, _, _ = source
                base = _base_output(step_ref, step_name, catalog)
                value = Composite(
                    (Literal(annotation + ": "), OutputRef(step_ref, base))
                )
            else:
                value = Literal(annotation)
        elif decl.kind is ValueKind.COLUMN:
            if resolved_table is None:
                if decl.required:
                    raise UnresolvedTableError(
                        f"no table context for column input of {row.name!r}"
                    )
                continue
            ranked = yield ChoicesRequest(
                ArtifactKind.COLUMN_NAME, annotation, scope=resolved_table
            )
            column = _accept_top(ranked, COLUMN_SCORE_GATE)
            if column is None:
                if decl.required:
                    raise UnresolvedValueError(
                        f"no column signal in annotation {annotation!r}"
                    )
                continue
            value = Literal(column)
        else:  # plain text
            value = Literal(annotation)

        if value is not None:
            if not emitted_header:
                yield Fragment("inputs:\n")
                emitted_header = True
            iv = StepInputValue(decl.name, value)
            inputs.append(iv)
            yield Fragment(_input_row(iv))

    if not emitted_header:
        yield Fragment("inputs: []\n")


def _input_row(iv: StepInputValue) -> str:
    # One canonical list item; concatenating these after "inputs:\n"
    # reproduces serialize_step_inputs byte for byte.
    text = serialize_step_inputs((iv,))
    assert text.startswith("inputs:\n")
    return text[len("inputs:\n"):]


def _pick_source(
    sources: list[tuple[int | str, str, str | None, str]],
    catalog: EnvironmentCatalog,
) -> tuple[int | str, str, str | None, str] | None:
    """Latest earlier step with at least one declared output, else the
    trigger when it exposes one."""
    for source in sources:
        step_ref, step_name, _, _ = source
        if step_ref == "trigger":
            return source
        definition = catalog.step(step_name)
        if definition is not None and definition.outputs:
            return source
    return None


def _base_output(step_ref: int | str, step_name: str, catalog: EnvironmentCatalog) -> str:
    if step_ref == "trigger":
        return "record"
    definition = catalog.step(step_name)
    assert definition is not None and definition.outputs
    return definition.outputs[0].name


def _build_condition(annotation: str, table: str) -> Pipeline:
    """Column/value condition building with cue-word operators.

    Implemented as a sub-pipeline so its choices requests flow through the
    same adaptive protocol; returns the condition (or None) via the
    generator return value.
    """
    lowered = annotation.lower()
    conjuncts: list[Conjunct] = []
    cue_operator: Operator | None = None
    if any(cue in lowered for cue in EMPTY_CUES):
        cue_operator = Operator.ISEMPTY
    elif any(cue in lowered for cue in NOT_EMPTY_CUES):
        cue_operator = Operator.ISNOTEMPTY
    scoped = _scoped_query(annotation, table)
    if cue_operator is not None:
        ranked = yield ChoicesRequest(ArtifactKind.COLUMN_NAME, scoped, scope=table)
        column = _accept_top(ranked, COLUMN_SCORE_GATE)
        if column is not None:
            conjuncts.append(Conjunct(column, cue_operator))

    ranked = yield ChoicesRequest(ArtifactKind.COLUMN_VALUE, scoped, scope=table)
    accepted = _accept_value(ranked)
    if accepted is not None:
        column, value = accepted
        if all(c.column != column for c in conjuncts):
            conjuncts.append(Conjunct(column, Operator.EQ, value))

    return ConditionExpr(tuple(conjuncts)) if conjuncts else None


def _join_condition(annotation: str, trigger: Trigger | None) -> Pipeline:
    """Select-by-relation fallback: match a column of the trigger's table
    mentioned in the annotation and join on the sys_id platform key."""
    if trigger is None or not trigger.outputs or not trigger.table:
        return None
    ranked = yield ChoicesRequest(
        ArtifactKind.COLUMN_NAME,
        _scoped_query(annotation, trigger.table),
        scope=trigger.table,
    )
    column = _accept_top(ranked, COLUMN_SCORE_GATE)
    if column is None:
        return None
    ref = OutputRef("trigger", f"record.{column}")
    return ConditionExpr((Conjunct("sys_id", Operator.EQ, ref.encode()),))


class ReferenceGenerator(PipelineGenerator):
    """Rule pipeline behind the standard generator contract."""

    def __init__(self, catalog: EnvironmentCatalog):
        def factory(state: PromptState) -> Pipeline:
            if state.sub_task is SubTask.CREATE_FLOW:
                return create_flow_pipeline(state, catalog)
            return populate_inputs_pipeline(state, catalog)

        super().__init__(factory)


@register_generator("reference")
def _reference_factory(catalog: EnvironmentCatalog, config: dict) -> ReferenceGenerator:
    return ReferenceGenerator(catalog)


ChoicesOracle = Callable[[ArtifactKind, str, "str | None"], RankedChoices]


def _drive(pipeline: Pipeline, oracle: ChoicesOracle) -> str:
    fragments: list[str] = []
    try:
        event = next(pipeline)
        while True:
            if isinstance(event, Fragment):
                fragments.append(event.text)
                event = pipeline.send(None)
            elif isinstance(event, ChoicesRequest):
                ranked = oracle(event.kind, event.query, event.scope)
                event = pipeline.send(ranked)
            else:
                break
    except StopIteration:
        pass
    return "".join(fragments)


def reference_create_flow(
    requirement: str, choices_oracle: ChoicesOracle, catalog: EnvironmentCatalog
) -> str:
    """Run the outline pipeline directly against a choices callback."""
    state = PromptState.for_create_flow(requirement)
    return _drive(create_flow_pipeline(state, catalog), choices_oracle)


def reference_populate_inputs(
    step_context: PromptState, choices_oracle: ChoicesOracle, catalog: EnvironmentCatalog
) -> str:
    """Run the input pipeline directly against a choices callback."""
    return _drive(populate_inputs_pipeline(step_context, catalog), choices_oracle)

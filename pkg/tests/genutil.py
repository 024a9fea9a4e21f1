"""Seeded random builders for property tests.

Workflows built here are valid against the demo catalog by construction,
so round-trip and validation properties can be checked over large
populations without hand-writing fixtures.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from flowforge.catalog import EnvironmentCatalog, StepDefinition, ValueKind
from flowforge.model import (
    Composite,
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

_WORDS = (
    "look", "up", "the", "user", "incident", "send", "reminder", "close",
    "open", "task", "manager", "daily", "review", "notify", "update",
    "critical", "pending", "records", "group", "email",
)


@dataclass
class _Source:
    """An earlier step (or the trigger) whose outputs may be referenced."""

    step_ref: int | str
    outputs: tuple[str, ...]
    table: str | None


def _words(rng: random.Random, lo: int = 1, hi: int = 6) -> str:
    return " ".join(rng.choice(_WORDS) for _ in range(rng.randint(lo, hi)))


def _random_condition(
    rng: random.Random, catalog: EnvironmentCatalog, table: str | None
) -> ConditionExpr:
    schema = catalog.table(table) if table else None
    conjuncts = []
    for _ in range(rng.randint(1, 3)):
        col = rng.choice(schema.columns) if schema is not None else None
        name = col.name if col is not None else rng.choice(("field_a", "field_b", "field_c"))
        op = rng.choice(list(Operator))
        if not op.takes_operand:
            conjuncts.append(Conjunct(name, op))
        elif col is not None and col.values and op is Operator.EQ:
            conjuncts.append(Conjunct(name, op, rng.choice(col.values).value))
        else:
            conjuncts.append(Conjunct(name, op, str(rng.randint(0, 99))))
    return ConditionExpr(tuple(conjuncts))


def _pick_ref(rng: random.Random, sources: list[_Source]) -> tuple[OutputRef, _Source]:
    src = rng.choice(sources)
    return OutputRef(src.step_ref, rng.choice(src.outputs)), src


def _needs_source(definition: StepDefinition) -> bool:
    return any(d.kind is ValueKind.REFERENCE and d.required for d in definition.inputs)


def _build_inputs(
    rng: random.Random,
    catalog: EnvironmentCatalog,
    definition: StepDefinition,
    sources: list[_Source],
) -> tuple[StepInputValue, ...]:
    include = {
        d.name: (d.required or rng.random() < 0.6) for d in definition.inputs
    }
    if not sources:
        for decl in definition.inputs:
            if decl.kind is ValueKind.REFERENCE:
                include[decl.name] = False
    # Pick tables and references first: they fix the context table that the
    # validator will later use to check condition and column inputs.
    picked: dict[str, object] = {}
    context_table: str | None = None
    for decl in definition.inputs:
        if not include[decl.name]:
            continue
        if decl.kind is ValueKind.TABLE:
            table = rng.choice(sorted(catalog.tables))
            picked[decl.name] = Literal(table)
            if context_table is None:
                context_table = table
        elif decl.kind is ValueKind.REFERENCE:
            ref, src = _pick_ref(rng, sources)
            picked[decl.name] = ref
    if context_table is None:
        for decl in definition.inputs:
            if decl.kind is ValueKind.REFERENCE and decl.name in picked:
                ref = picked[decl.name]
                assert isinstance(ref, OutputRef)
                context_table = next(
                    (s.table for s in sources if s.step_ref == ref.step_ref), None
                )
                break

    inputs: list[StepInputValue] = []
    for decl in definition.inputs:
        if not include[decl.name]:
            continue
        if decl.name in picked:
            inputs.append(StepInputValue(decl.name, picked[decl.name]))
        elif decl.kind is ValueKind.CONDITION:
            inputs.append(
                StepInputValue(decl.name, _random_condition(rng, catalog, context_table))
            )
        elif decl.kind is ValueKind.COLUMN:
            schema = catalog.table(context_table) if context_table else None
            name = (
                rng.choice(schema.columns).name
                if schema is not None and schema.columns
                else "field_a"
            )
            inputs.append(StepInputValue(decl.name, Literal(name)))
        elif decl.kind is ValueKind.EMAIL_BODY and sources and rng.random() < 0.7:
            ref, _ = _pick_ref(rng, sources)
            inputs.append(
                StepInputValue(
                    decl.name,
                    Composite((Literal(_words(rng) + " "), ref, Literal(" " + _words(rng)))),
                )
            )
        else:
            inputs.append(StepInputValue(decl.name, Literal(_words(rng))))
    return tuple(inputs)


def build_random_workflow(rng: random.Random, catalog: EnvironmentCatalog) -> Workflow:
    """Build a random workflow that validates cleanly against the catalog."""
    tables = sorted(catalog.tables)
    event = rng.choice(list(TriggerEvent))
    if event is TriggerEvent.SCHEDULED:
        trigger = Trigger(event=event, schedule=f"every day at {rng.randint(0, 23)}:00")
        sources: list[_Source] = []
    else:
        table = rng.choice(tables)
        condition = _random_condition(rng, catalog, table) if rng.random() < 0.5 else None
        trigger = Trigger(event=event, table=table, condition=condition)
        sources = [_Source("trigger", ("record", "record.sys_id"), table)]

    step_defs = sorted(catalog.steps.values(), key=lambda s: s.name)
    safe_defs = [d for d in step_defs if not _needs_source(d)]
    steps: list[Step] = []
    flow_parents: list[int] = []
    for order in range(1, rng.randint(0, 8) + 1):
        definition = rng.choice(step_defs)
        if _needs_source(definition) and not sources:
            definition = rng.choice(safe_defs)
        block = rng.choice(flow_parents) if flow_parents and rng.random() < 0.4 else 0
        inputs = _build_inputs(rng, catalog, definition, sources)
        steps.append(
            Step(
                name=definition.name,
                annotation=_words(rng, 2, 7),
                order=order,
                block=block,
                inputs=inputs,
            )
        )
        if definition.flow_control:
            flow_parents.append(order)
        if definition.outputs:
            table_literal = next(
                (
                    iv.value.text
                    for iv in inputs
                    if isinstance(iv.value, Literal)
                    and (decl := definition.input_decl(iv.name)) is not None
                    and decl.kind is ValueKind.TABLE
                ),
                None,
            )
            sources.append(
                _Source(order, tuple(o.name for o in definition.outputs), table_literal)
            )
    return Workflow(trigger=trigger, steps=tuple(steps), requirement=_words(rng, 4, 12))

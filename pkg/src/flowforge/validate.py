"""Structural validation of workflows against an environment catalog.

Violations are data, not exceptions: the report lists each broken
invariant with a stable code and the location of the offending element.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .catalog import EnvironmentCatalog, StepDefinition, ValueKind
from .model import (
    ConditionExpr,
    Literal,
    OutputRef,
    Step,
    TriggerEvent,
    Workflow,
    iter_output_refs,
)


class ViolationCode(str, Enum):
    UNKNOWN_STEP = "UNKNOWN_STEP"
    UNKNOWN_TABLE = "UNKNOWN_TABLE"
    UNKNOWN_COLUMN = "UNKNOWN_COLUMN"
    FORWARD_REF = "FORWARD_REF"
    BAD_BLOCK = "BAD_BLOCK"
    ORDER_GAP = "ORDER_GAP"
    UNKNOWN_INPUT_NAME = "UNKNOWN_INPUT_NAME"
    MISSING_REQUIRED_INPUT = "MISSING_REQUIRED_INPUT"
    BAD_OUTPUT_PATH = "BAD_OUTPUT_PATH"


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    location: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[ViolationCode]:
        return {v.code for v in self.violations}


class _Checker:
    def __init__(self, workflow: Workflow, catalog: EnvironmentCatalog):
        self.w = workflow
        self.catalog = catalog
        self.violations: list[Violation] = []
        self.defs: dict[int, StepDefinition | None] = {}

    def add(self, code: ViolationCode, location: str, message: str) -> None:
        self.violations.append(Violation(code, location, message))

    def run(self) -> ValidationReport:
        self.check_orders()
        self.check_trigger()
        for idx, step in enumerate(self.w.steps):
            self.check_step(idx, step)
        return ValidationReport(tuple(self.violations))

    def check_orders(self) -> None:
        orders = [s.order for s in self.w.steps]
        if sorted(orders) != list(range(1, len(orders) + 1)):
            self.add(
                ViolationCode.ORDER_GAP,
                "steps",
                f"step orders must be 1..{len(orders)} without gaps, got {orders}",
            )

    def check_trigger(self) -> None:
        trig = self.w.trigger
        if trig.event is not TriggerEvent.SCHEDULED:
            if not trig.table:
                self.add(ViolationCode.UNKNOWN_TABLE, "trigger", "trigger requires a table")
            elif self.catalog.table(trig.table) is None:
                self.add(
                    ViolationCode.UNKNOWN_TABLE,
                    "trigger.table",
                    f"unknown table {trig.table!r}",
                )
        if trig.condition is not None and trig.table:
            self.check_condition_columns(trig.condition, trig.table, "trigger.condition")

    def check_condition_columns(
        self, condition: ConditionExpr, table_name: str, location: str
    ) -> None:
        table = self.catalog.table(table_name)
        if table is None:
            return
        for conj in condition.conjuncts:
            if table.column(conj.column) is None:
                self.add(
                    ViolationCode.UNKNOWN_COLUMN,
                    location,
                    f"table {table_name!r} has no column {conj.column!r}",
                )

    def resolve_context_table(self, step: Step, definition: StepDefinition) -> str | None:
        """Table scoping condition/column inputs of this step: a sibling
        table-valued input, or (one hop) the table of a referenced step."""
        for iv in step.inputs:
            decl = definition.input_decl(iv.name)
            if decl and decl.kind is ValueKind.TABLE and isinstance(iv.value, Literal):
                return iv.value.text
        for iv in step.inputs:
            decl = definition.input_decl(iv.name)
            if decl and decl.kind is ValueKind.REFERENCE and isinstance(iv.value, OutputRef):
                return self.table_of_ref(iv.value)
        return None

    def table_of_ref(self, ref: OutputRef) -> str | None:
        if ref.step_ref == "trigger":
            return self.w.trigger.table
        if isinstance(ref.step_ref, int):
            target = self.w.step_at(ref.step_ref)
            if target is None:
                return None
            target_def = self.catalog.step(target.name)
            if target_def is None:
                return None
            for iv in target.inputs:
                decl = target_def.input_decl(iv.name)
                if decl and decl.kind is ValueKind.TABLE and isinstance(iv.value, Literal):
                    return iv.value.text
        return None

    def check_step(self, idx: int, step: Step) -> None:
        loc = f"steps[{idx}]"
        definition = self.catalog.step(step.name)
        self.defs[step.order] = definition
        if definition is None:
            self.add(ViolationCode.UNKNOWN_STEP, loc, f"unknown step {step.name!r}")
        self.check_block(step, loc)
        self.check_refs(step, loc)
        if definition is not None:
            self.check_inputs(step, definition, loc)

    def check_block(self, step: Step, loc: str) -> None:
        if step.block == 0:
            return
        parent = None
        for other in self.w.steps:
            if other.order == step.block and other.order < step.order:
                parent = other
                break
        if parent is None:
            self.add(
                ViolationCode.BAD_BLOCK,
                loc,
                f"block {step.block} does not name an earlier step",
            )
            return
        parent_def = self.catalog.step(parent.name)
        if parent_def is None or not parent_def.flow_control:
            self.add(
                ViolationCode.BAD_BLOCK,
                loc,
                f"block parent {parent.name!r} is not flow-control capable",
            )

    def check_refs(self, step: Step, loc: str) -> None:
        for i, iv in enumerate(step.inputs):
            where = f"{loc}.inputs[{i}]"
            for ref in iter_output_refs(iv.value):
                if ref.step_ref == "trigger":
                    outputs = self.w.trigger.outputs
                    self.check_path(ref, outputs, "trigger", where)
                    continue
                order = ref.step_ref
                if not isinstance(order, int) or order < 1 or order >= step.order:
                    self.add(
                        ViolationCode.FORWARD_REF,
                        where,
                        f"reference to step {order} does not resolve to an earlier step",
                    )
                    continue
                target = self.w.step_at(order)
                if target is None:
                    self.add(
                        ViolationCode.FORWARD_REF,
                        where,
                        f"reference to missing step order {order}",
                    )
                    continue
                target_def = self.catalog.step(target.name)
                if target_def is None:
                    continue  # already reported as UNKNOWN_STEP
                self.check_path(ref, target_def.output_names, target.name, where)

    def check_path(
        self, ref: OutputRef, outputs: frozenset[str], owner: str, where: str
    ) -> None:
        prefix = ref.path.split(".", 1)[0] if ref.path else ""
        if not prefix or prefix not in outputs:
            self.add(
                ViolationCode.BAD_OUTPUT_PATH,
                where,
                f"{owner} has no output {prefix!r}",
            )

    def check_inputs(self, step: Step, definition: StepDefinition, loc: str) -> None:
        declared = {d.name for d in definition.inputs}
        counts: dict[str, int] = {}
        for i, iv in enumerate(step.inputs):
            counts[iv.name] = counts.get(iv.name, 0) + 1
            if iv.name not in declared:
                self.add(
                    ViolationCode.UNKNOWN_INPUT_NAME,
                    f"{loc}.inputs[{i}]",
                    f"step {step.name!r} declares no input {iv.name!r}",
                )
        for decl in definition.inputs:
            if decl.required and counts.get(decl.name, 0) != 1:
                self.add(
                    ViolationCode.MISSING_REQUIRED_INPUT,
                    loc,
                    f"required input {decl.name!r} must appear exactly once "
                    f"(found {counts.get(decl.name, 0)})",
                )
        context_table = self.resolve_context_table(step, definition)
        for i, iv in enumerate(step.inputs):
            decl = definition.input_decl(iv.name)
            if decl is None:
                continue
            where = f"{loc}.inputs[{i}]"
            if decl.kind is ValueKind.TABLE and isinstance(iv.value, Literal):
                if self.catalog.table(iv.value.text) is None:
                    self.add(
                        ViolationCode.UNKNOWN_TABLE,
                        where,
                        f"unknown table {iv.value.text!r}",
                    )
            elif decl.kind is ValueKind.COLUMN and isinstance(iv.value, Literal):
                if context_table and self.catalog.table(context_table):
                    if self.catalog.table(context_table).column(iv.value.text) is None:
                        self.add(
                            ViolationCode.UNKNOWN_COLUMN,
                            where,
                            f"table {context_table!r} has no column {iv.value.text!r}",
                        )
            elif decl.kind is ValueKind.CONDITION and isinstance(iv.value, ConditionExpr):
                if context_table:
                    self.check_condition_columns(iv.value, context_table, where)


def validate_workflow(workflow: Workflow, catalog: EnvironmentCatalog) -> ValidationReport:
    """Check every structural invariant of a workflow against the catalog."""
    return _Checker(workflow, catalog).run()

"""Core workflow domain model.

A workflow is a trigger plus an ordered list of steps. Step inputs hold
value expressions that may reference outputs of earlier steps (or the
trigger) and environment artifacts such as table names, columns, and
column values. Everything in this module is an immutable value; parsing
and serialization live in :mod:`flowforge.dsl`, validation against an
environment catalog in :mod:`flowforge.validate`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Union

TRIGGER_REF = "trigger"

# Outputs available on the trigger itself. Record-based triggers expose the
# matched record; scheduled triggers expose nothing.
TRIGGER_RECORD_OUTPUTS = frozenset({"record"})


class TriggerEvent(str, Enum):
    CREATED = "created"
    UPDATED = "updated"
    SCHEDULED = "scheduled"


class Operator(str, Enum):
    """Condition operators. Symbolic operators carry one operand, the
    emptiness tests carry none."""

    EQ = "="
    NEQ = "!="
    GT = ">"
    LT = "<"
    ISEMPTY = "ISEMPTY"
    ISNOTEMPTY = "ISNOTEMPTY"

    @property
    def takes_operand(self) -> bool:
        return self not in (Operator.ISEMPTY, Operator.ISNOTEMPTY)


_COLUMN_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")
# Symbolic operators ordered so that two-character tokens win over their
# one-character prefixes.
_SYMBOLIC_OPS = (Operator.NEQ, Operator.EQ, Operator.GT, Operator.LT)
_REF_RE = re.compile(r"\{\{([^{}]*)\}\}")
_CONJUNCT_SEP = "^"


class ConditionSyntaxError(ValueError):
    """Raised when text does not encode a condition expression."""


@dataclass(frozen=True)
class Conjunct:
    column: str
    operator: Operator
    operand: str | None = None

    def __post_init__(self) -> None:
        if not _COLUMN_RE.match(self.column):
            raise ConditionSyntaxError(f"bad condition column: {self.column!r}")
        if self.operator.takes_operand:
            if not self.operand:
                raise ConditionSyntaxError(
                    f"operator {self.operator.name} requires an operand"
                )
            if _CONJUNCT_SEP in self.operand:
                raise ConditionSyntaxError(
                    f"operand may not contain {_CONJUNCT_SEP!r}: {self.operand!r}"
                )
        elif self.operand is not None:
            raise ConditionSyntaxError(
                f"operator {self.operator.name} takes no operand"
            )

    def encode(self) -> str:
        if self.operator.takes_operand:
            return f"{self.column}{self.operator.value}{self.operand}"
        return f"{self.column}{self.operator.value}"


@dataclass(frozen=True)
class ConditionExpr:
    """Conjunction of column tests, e.g. ``assigned_toISEMPTY^state=3``."""

    conjuncts: tuple[Conjunct, ...]

    def __post_init__(self) -> None:
        if not self.conjuncts:
            raise ConditionSyntaxError("condition needs at least one conjunct")

    def encode(self) -> str:
        return _CONJUNCT_SEP.join(c.encode() for c in self.conjuncts)

    @staticmethod
    def parse(text: str) -> "ConditionExpr":
        return ConditionExpr(
            tuple(_parse_conjunct(part) for part in text.split(_CONJUNCT_SEP))
        )


def _parse_conjunct(text: str) -> Conjunct:
    for op in (Operator.ISNOTEMPTY, Operator.ISEMPTY):
        if text.endswith(op.value):
            column = text[: -len(op.value)]
            if _COLUMN_RE.match(column):
                return Conjunct(column, op)
    for i, ch in enumerate(text):
        if ch in "=!><":
            for op in _SYMBOLIC_OPS:
                if text.startswith(op.value, i):
                    column, operand = text[:i], text[i + len(op.value):]
                    if _COLUMN_RE.match(column) and operand:
                        return Conjunct(column, op, operand)
            break
    raise ConditionSyntaxError(f"not a condition conjunct: {text!r}")


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class OutputRef:
    """Reference to an output of the trigger or of an earlier step.

    ``step_ref`` is the literal ``"trigger"`` or the 1-based order of the
    referenced step; ``path`` is a dot-joined path whose first segment must
    name an output of the referenced step.
    """

    step_ref: Union[int, str]
    path: str

    def encode(self) -> str:
        return "{{%s.%s}}" % (self.step_ref, self.path) if self.path else (
            "{{%s}}" % self.step_ref
        )


@dataclass(frozen=True)
class Composite:
    """Literal text with embedded output references (email bodies etc.)."""

    segments: tuple[Union[Literal, OutputRef], ...]


ValueExpr = Union[Literal, OutputRef, ConditionExpr, Composite]


def _parse_ref_body(body: str) -> OutputRef | None:
    head, _, path = body.partition(".")
    if head == TRIGGER_REF:
        return OutputRef(TRIGGER_REF, path)
    if head.isdigit():
        return OutputRef(int(head), path)
    return None


def parse_value(text: str) -> ValueExpr:
    """Parse a scalar input value into its expression form.

    Precedence is fixed so the mapping from text to expression is a
    function: a lone ``{{...}}`` is an output reference, then the condition
    grammar, then mixed text with embedded references, then plain literal.
    """
    m = _REF_RE.fullmatch(text)
    if m:
        ref = _parse_ref_body(m.group(1))
        if ref is not None:
            return ref
    try:
        return ConditionExpr.parse(text)
    except ConditionSyntaxError:
        pass
    if _REF_RE.search(text):
        segments: list[Literal | OutputRef] = []
        pos = 0
        for m in _REF_RE.finditer(text):
            ref = _parse_ref_body(m.group(1))
            if ref is None:
                continue
            if m.start() > pos:
                segments.append(Literal(text[pos:m.start()]))
            segments.append(ref)
            pos = m.end()
        if any(isinstance(s, OutputRef) for s in segments):
            if pos < len(text):
                segments.append(Literal(text[pos:]))
            return Composite(tuple(segments))
    return Literal(text)


def render_value(value: ValueExpr) -> str:
    """Inverse of :func:`parse_value` on canonical expressions."""
    if isinstance(value, Literal):
        return value.text
    if isinstance(value, OutputRef):
        return value.encode()
    if isinstance(value, ConditionExpr):
        return value.encode()
    if isinstance(value, Composite):
        return "".join(
            s.text if isinstance(s, Literal) else s.encode() for s in value.segments
        )
    raise TypeError(f"not a value expression: {value!r}")


def iter_output_refs(value: ValueExpr) -> Iterator[OutputRef]:
    """Yield every output reference inside a value, including references
    embedded in condition operands and composite segments."""
    if isinstance(value, OutputRef):
        yield value
    elif isinstance(value, Composite):
        for seg in value.segments:
            if isinstance(seg, OutputRef):
                yield seg
    elif isinstance(value, ConditionExpr):
        for conj in value.conjuncts:
            if conj.operand:
                for m in _REF_RE.finditer(conj.operand):
                    ref = _parse_ref_body(m.group(1))
                    if ref is not None:
                        yield ref


@dataclass(frozen=True)
class StepInputValue:
    name: str
    value: ValueExpr


@dataclass(frozen=True)
class Step:
    name: str
    annotation: str = ""
    order: int = 1
    block: int = 0
    inputs: tuple[StepInputValue, ...] = ()

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError(f"step order must be positive: {self.order}")
        if self.block < 0:
            raise ValueError(f"step block must be non-negative: {self.block}")


@dataclass(frozen=True)
class Trigger:
    event: TriggerEvent
    table: str | None = None
    condition: ConditionExpr | None = None
    schedule: str | None = None

    def __post_init__(self) -> None:
        if self.event is TriggerEvent.SCHEDULED:
            if not self.schedule:
                raise ValueError("scheduled trigger requires a schedule")
        elif self.schedule is not None:
            raise ValueError("schedule only allowed on scheduled triggers")

    @property
    def outputs(self) -> frozenset[str]:
        if self.event is TriggerEvent.SCHEDULED:
            return frozenset()
        return TRIGGER_RECORD_OUTPUTS


@dataclass(frozen=True)
class Workflow:
    trigger: Trigger
    steps: tuple[Step, ...] = ()
    requirement: str = ""

    def step_at(self, order: int) -> Step | None:
        for step in self.steps:
            if step.order == order:
                return step
        return None


@dataclass(frozen=True)
class OutlineRow:
    name: str
    annotation: str = ""
    order: int = 1
    block: int = 0


@dataclass(frozen=True)
class Outline:
    """Workflow skeleton: full trigger plus step rows without inputs."""

    trigger: Trigger
    rows: tuple[OutlineRow, ...] = ()


def extract_outline(workflow: Workflow) -> Outline:
    return Outline(
        trigger=workflow.trigger,
        rows=tuple(
            OutlineRow(s.name, s.annotation, s.order, s.block)
            for s in workflow.steps
        ),
    )

"""Concrete workflow DSL: a YAML-compatible subset with fixed keys.

Canonical serialization uses a fixed key order, two-space indentation, and
deterministic scalar quoting, so ``serialize(parse(serialize(w)))`` is
byte-identical to ``serialize(w)``. Parsing is lenient about cosmetic YAML
variation but strict about keys and structure, and reports errors with line
and column positions.
"""

from __future__ import annotations

from typing import Any, Iterable

import yaml

from .model import (
    Conjunct,
    ConditionExpr,
    ConditionSyntaxError,
    Outline,
    OutlineRow,
    Step,
    StepInputValue,
    Trigger,
    TriggerEvent,
    Workflow,
    parse_value,
    render_value,
)

WORKFLOW_FILE_SUFFIX = ".flow.yaml"
REQUIREMENT_FILE_SUFFIX = ".req.txt"

_TOP_KEYS = ("requirement", "trigger", "steps")
_TRIGGER_KEYS = ("table", "event", "condition", "schedule")
_STEP_KEYS = ("name", "annotation", "order", "block", "inputs")
_OUTLINE_STEP_KEYS = ("name", "annotation", "order", "block")
_INPUT_KEYS = ("name", "value")


class WorkflowSyntaxError(ValueError):
    """Malformed document. Carries the 1-based line/column when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class UnknownKeyError(WorkflowSyntaxError):
    pass


class DuplicateOrderError(WorkflowSyntaxError):
    pass


def _mark(node: yaml.Node) -> tuple[int, int]:
    return node.start_mark.line + 1, node.start_mark.column + 1


def _compose(text: str) -> yaml.Node:
    try:
        node = yaml.compose(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise WorkflowSyntaxError(f"invalid document: {exc.problem}", line, col) from exc
    except yaml.YAMLError as exc:
        raise WorkflowSyntaxError(f"invalid document: {exc}") from exc
    if node is None:
        raise WorkflowSyntaxError("empty document")
    return node


def _mapping(node: yaml.Node, what: str, allowed: tuple[str, ...]) -> dict[str, yaml.Node]:
    if not isinstance(node, yaml.MappingNode):
        line, col = _mark(node)
        raise WorkflowSyntaxError(f"{what} must be a mapping", line, col)
    out: dict[str, yaml.Node] = {}
    for key_node, value_node in node.value:
        key = key_node.value
        if key not in allowed:
            line, col = _mark(key_node)
            raise UnknownKeyError(f"unknown key {key!r} in {what}", line, col)
        if key in out:
            line, col = _mark(key_node)
            raise WorkflowSyntaxError(f"duplicate key {key!r} in {what}", line, col)
        out[key] = value_node
    return out


def _sequence(node: yaml.Node, what: str) -> list[yaml.Node]:
    if not isinstance(node, yaml.SequenceNode):
        line, col = _mark(node)
        raise WorkflowSyntaxError(f"{what} must be a list", line, col)
    return list(node.value)


def _scalar_str(node: yaml.Node, what: str) -> str:
    if not isinstance(node, yaml.ScalarNode):
        line, col = _mark(node)
        raise WorkflowSyntaxError(f"{what} must be a scalar", line, col)
    if node.tag == "tag:yaml.org,2002:null":
        return ""
    return node.value


def _scalar_int(node: yaml.Node, what: str) -> int:
    text = _scalar_str(node, what)
    if not text.isdigit():
        line, col = _mark(node)
        raise WorkflowSyntaxError(f"{what} must be a non-negative integer", line, col)
    return int(text)


def _parse_trigger(node: yaml.Node) -> Trigger:
    fields = _mapping(node, "trigger", _TRIGGER_KEYS)
    if "event" not in fields:
        line, col = _mark(node)
        raise WorkflowSyntaxError("trigger requires an event", line, col)
    event_text = _scalar_str(fields["event"], "trigger event")
    try:
        event = TriggerEvent(event_text)
    except ValueError:
        line, col = _mark(fields["event"])
        raise WorkflowSyntaxError(f"unknown trigger event {event_text!r}", line, col)
    table = _scalar_str(fields["table"], "trigger table") if "table" in fields else None
    condition = None
    if "condition" in fields:
        cond_text = _scalar_str(fields["condition"], "trigger condition")
        try:
            condition = ConditionExpr.parse(cond_text)
        except ConditionSyntaxError as exc:
            line, col = _mark(fields["condition"])
            raise WorkflowSyntaxError(str(exc), line, col) from exc
    schedule = (
        _scalar_str(fields["schedule"], "trigger schedule") if "schedule" in fields else None
    )
    try:
        return Trigger(event=event, table=table or None, condition=condition, schedule=schedule)
    except ValueError as exc:
        line, col = _mark(node)
        raise WorkflowSyntaxError(str(exc), line, col) from exc


def _parse_inputs(node: yaml.Node) -> tuple[StepInputValue, ...]:
    inputs: list[StepInputValue] = []
    seen: set[str] = set()
    for item in _sequence(node, "inputs"):
        fields = _mapping(item, "input", _INPUT_KEYS)
        if "name" not in fields or "value" not in fields:
            line, col = _mark(item)
            raise WorkflowSyntaxError("input requires name and value", line, col)
        name = _scalar_str(fields["name"], "input name")
        if name in seen:
            line, col = _mark(fields["name"])
            raise WorkflowSyntaxError(f"duplicate input name {name!r}", line, col)
        seen.add(name)
        value = parse_value(_scalar_str(fields["value"], "input value"))
        inputs.append(StepInputValue(name, value))
    return tuple(inputs)


def _parse_step(node: yaml.Node, allowed: tuple[str, ...]) -> dict[str, Any]:
    fields = _mapping(node, "step", allowed)
    if "name" not in fields or "order" not in fields:
        line, col = _mark(node)
        raise WorkflowSyntaxError("step requires name and order", line, col)
    out: dict[str, Any] = {
        "name": _scalar_str(fields["name"], "step name"),
        "annotation": (
            _scalar_str(fields["annotation"], "step annotation")
            if "annotation" in fields
            else ""
        ),
        "order": _scalar_int(fields["order"], "step order"),
        "block": _scalar_int(fields["block"], "step block") if "block" in fields else 0,
    }
    if out["order"] < 1:
        line, col = _mark(fields["order"])
        raise WorkflowSyntaxError("step order must be positive", line, col)
    if "inputs" in fields:
        out["inputs"] = _parse_inputs(fields["inputs"])
    return out


def _check_orders(steps: Iterable[dict[str, Any]], nodes: list[yaml.Node]) -> None:
    seen: dict[int, None] = {}
    for parsed, node in zip(steps, nodes):
        order = parsed["order"]
        if order in seen:
            line, col = _mark(node)
            raise DuplicateOrderError(f"duplicate step order {order}", line, col)
        seen[order] = None


def parse_workflow(text: str) -> Workflow:
    """Parse a workflow document into its structural form."""
    root = _compose(text)
    fields = _mapping(root, "workflow", _TOP_KEYS)
    if "trigger" not in fields:
        line, col = _mark(root)
        raise WorkflowSyntaxError("workflow requires a trigger", line, col)
    requirement = (
        _scalar_str(fields["requirement"], "requirement") if "requirement" in fields else ""
    )
    trigger = _parse_trigger(fields["trigger"])
    steps: tuple[Step, ...] = ()
    if "steps" in fields:
        nodes = _sequence(fields["steps"], "steps")
        parsed = [_parse_step(n, _STEP_KEYS) for n in nodes]
        _check_orders(parsed, nodes)
        steps = tuple(
            Step(
                name=p["name"],
                annotation=p["annotation"],
                order=p["order"],
                block=p["block"],
                inputs=p.get("inputs", ()),
            )
            for p in parsed
        )
    return Workflow(trigger=trigger, steps=steps, requirement=requirement)


def parse_outline(text: str) -> Outline:
    """Parse an outline document (trigger plus input-less step rows)."""
    root = _compose(text)
    fields = _mapping(root, "outline", ("trigger", "steps"))
    if "trigger" not in fields:
        line, col = _mark(root)
        raise WorkflowSyntaxError("outline requires a trigger", line, col)
    trigger = _parse_trigger(fields["trigger"])
    rows: tuple[OutlineRow, ...] = ()
    if "steps" in fields:
        nodes = _sequence(fields["steps"], "steps")
        parsed = [_parse_step(n, _OUTLINE_STEP_KEYS) for n in nodes]
        _check_orders(parsed, nodes)
        rows = tuple(
            OutlineRow(p["name"], p["annotation"], p["order"], p["block"]) for p in parsed
        )
    return Outline(trigger=trigger, rows=rows)


def parse_step_rows(text: str) -> tuple[OutlineRow, ...]:
    """Parse a bare YAML list of outline rows ("- name: ..." items)."""
    root = _compose(text)
    nodes = _sequence(root, "steps")
    parsed = [_parse_step(n, _OUTLINE_STEP_KEYS) for n in nodes]
    _check_orders(parsed, nodes)
    return tuple(
        OutlineRow(p["name"], p["annotation"], p["order"], p["block"]) for p in parsed
    )


def parse_step_inputs(text: str) -> tuple[StepInputValue, ...]:
    """Parse a single step's input list document (``inputs:`` at top level)."""
    root = _compose(text)
    fields = _mapping(root, "step inputs", ("inputs",))
    if "inputs" not in fields:
        line, col = _mark(root)
        raise WorkflowSyntaxError("document requires an inputs list", line, col)
    node = fields["inputs"]
    if isinstance(node, yaml.ScalarNode) and node.tag == "tag:yaml.org,2002:null":
        return ()
    if isinstance(node, yaml.SequenceNode) and not node.value:
        return ()
    return _parse_inputs(node)


def _dump(data: Any) -> str:
    return yaml.safe_dump(
        data, sort_keys=False, default_flow_style=False, width=10**6, allow_unicode=True
    )


def _trigger_dict(trigger: Trigger) -> dict[str, str]:
    out: dict[str, str] = {}
    if trigger.table is not None:
        out["table"] = trigger.table
    out["event"] = trigger.event.value
    if trigger.condition is not None:
        out["condition"] = trigger.condition.encode()
    if trigger.schedule is not None:
        out["schedule"] = trigger.schedule
    return out


def _step_dict(step: Step, with_inputs: bool = True) -> dict[str, Any]:
    out: dict[str, Any] = {"name": step.name}
    if step.annotation:
        out["annotation"] = step.annotation
    out["order"] = step.order
    if step.block:
        out["block"] = step.block
    if with_inputs and step.inputs:
        out["inputs"] = [
            {"name": iv.name, "value": render_value(iv.value)} for iv in step.inputs
        ]
    return out


def _row_dict(row: OutlineRow) -> dict[str, Any]:
    out: dict[str, Any] = {"name": row.name}
    if row.annotation:
        out["annotation"] = row.annotation
    out["order"] = row.order
    if row.block:
        out["block"] = row.block
    return out


def serialize_step_row(step: Step | OutlineRow, with_inputs: bool = True) -> str:
    """Render one step as a single canonical list item ("- name: ...")."""
    if isinstance(step, OutlineRow):
        return _dump([_row_dict(step)])
    return _dump([_step_dict(step, with_inputs)])


def serialize_trigger_block(trigger: Trigger) -> str:
    return _dump({"trigger": _trigger_dict(trigger)})


def serialize_workflow(workflow: Workflow) -> str:
    """Canonical serialization; inverse of :func:`parse_workflow`."""
    parts: list[str] = []
    if workflow.requirement:
        parts.append(_dump({"requirement": workflow.requirement}))
    parts.append(serialize_trigger_block(workflow.trigger))
    if workflow.steps:
        parts.append("steps:\n")
        parts.extend(serialize_step_row(step) for step in workflow.steps)
    return "".join(parts)


def serialize_outline(outline: Outline) -> str:
    """Canonical outline serialization; inverse of :func:`parse_outline`."""
    parts = [serialize_trigger_block(outline.trigger)]
    if outline.rows:
        parts.append("steps:\n")
        parts.extend(serialize_step_row(row) for row in outline.rows)
    return "".join(parts)


def serialize_step_inputs(inputs: tuple[StepInputValue, ...] | list[StepInputValue]) -> str:
    """Canonical input-list serialization; inverse of :func:`parse_step_inputs`."""
    if not inputs:
        return "inputs: []\n"
    return _dump(
        {"inputs": [{"name": iv.name, "value": render_value(iv.value)} for iv in inputs]}
    )

"""Workflow-to-tree rendering for edit-distance scoring.

A workflow becomes a rooted ordered labeled tree: WORKFLOW root, a TRIGGER
subtree, then one subtree per step in order, with block children nested
under their flow-control parent. Inputs become one node per input name
with one leaf per value atom, so partially correct values earn partial
credit. Annotations are generation aids and stay out of the tree unless
explicitly requested.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..model import (
    Composite,
    ConditionExpr,
    Literal,
    OutputRef,
    Step,
    ValueExpr,
    Workflow,
)

ROOT_LABEL = "WORKFLOW"
TRIGGER_LABEL = "TRIGGER"


class TreeMode(Enum):
    FULL = "full"
    OUTLINE_ONLY = "outline"
    SINGLE_STEP = "step"


@dataclass(frozen=True)
class TreeNode:
    label: str
    children: tuple["TreeNode", ...] = ()

    @property
    def size(self) -> int:
        return 1 + sum(c.size for c in self.children)


def value_atoms(value: ValueExpr) -> list[str]:
    """Flatten a value into comparable atom strings."""
    if isinstance(value, Literal):
        return [value.text]
    if isinstance(value, OutputRef):
        return [value.encode()]
    if isinstance(value, ConditionExpr):
        return [c.encode() for c in value.conjuncts]
    if isinstance(value, Composite):
        return [
            seg.text if isinstance(seg, Literal) else seg.encode()
            for seg in value.segments
        ]
    raise TypeError(f"not a value expression: {value!r}")


def _trigger_subtree(workflow: Workflow) -> TreeNode:
    trig = workflow.trigger
    children: list[TreeNode] = [
        TreeNode("event", (TreeNode(trig.event.value),))
    ]
    if trig.table:
        children.append(TreeNode("table", (TreeNode(trig.table),)))
    if trig.condition is not None:
        children.append(
            TreeNode(
                "condition",
                tuple(TreeNode(c.encode()) for c in trig.condition.conjuncts),
            )
        )
    if trig.schedule:
        children.append(TreeNode("schedule", (TreeNode(trig.schedule),)))
    return TreeNode(TRIGGER_LABEL, tuple(children))


def _step_children(
    step: Step, with_inputs: bool, include_annotations: bool
) -> list[TreeNode]:
    children: list[TreeNode] = []
    if include_annotations and step.annotation:
        children.append(TreeNode("annotation", (TreeNode(step.annotation),)))
    if with_inputs:
        for iv in step.inputs:
            children.append(
                TreeNode(iv.name, tuple(TreeNode(a) for a in value_atoms(iv.value)))
            )
    return children


def workflow_to_tree(
    workflow: Workflow,
    mode: TreeMode = TreeMode.FULL,
    step_name: str | None = None,
    include_annotations: bool = False,
) -> TreeNode:
    """Deterministic tree rendering of a workflow.

    ``OUTLINE_ONLY`` drops input subtrees; ``SINGLE_STEP`` keeps only the
    input subtrees of steps with the given name (detached from trigger and
    nesting) so one step type can be scored in isolation.
    """
    if mode is TreeMode.SINGLE_STEP:
        if not step_name:
            raise ValueError("SINGLE_STEP mode requires a step name")
        matches = [
            TreeNode(
                s.name, tuple(_step_children(s, True, include_annotations))
            )
            for s in workflow.steps
            if s.name == step_name
        ]
        return TreeNode(ROOT_LABEL, tuple(matches))

    with_inputs = mode is TreeMode.FULL
    # Build step nodes bottom-up so block children nest under their parent.
    # Only a backward block reference nests; anything else (including the
    # invalid forms scored diagnostically) stays at the top level.
    ordered = sorted(workflow.steps, key=lambda s: s.order)
    orders = {s.order for s in ordered}
    children_of: dict[int, list[TreeNode]] = {0: []}
    for step in reversed(ordered):
        node = TreeNode(
            step.name,
            tuple(
                _step_children(step, with_inputs, include_annotations)
                + children_of.get(step.order, [])
            ),
        )
        parent = step.block if 0 < step.block < step.order and step.block in orders else 0
        children_of.setdefault(parent, [])
        children_of[parent].insert(0, node)
    top = children_of[0]
    return TreeNode(ROOT_LABEL, (_trigger_subtree(workflow), *top))

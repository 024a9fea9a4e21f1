"""Dataset tooling: labeled workflows into sub-task and retrieval samples.

A labeled corpus of complete workflows is decomposed losslessly into
outline-generation samples (one per workflow) and input-generation samples
(one per step, with sequential earlier context). Retrieval samples are
mined from the same labels, and teacher forcing materializes the choice
sites with the gold payload guaranteed present.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .catalog import ArtifactKind, EnvironmentCatalog, ValueKind
from .dsl import (
    REQUIREMENT_FILE_SUFFIX,
    WORKFLOW_FILE_SUFFIX,
    parse_outline,
    parse_step_inputs,
    parse_step_rows,
    parse_workflow,
    serialize_outline,
    serialize_step_inputs,
    serialize_step_row,
)
from .model import (
    ConditionExpr,
    Literal,
    Operator,
    Outline,
    OutlineRow,
    Step,
    TriggerEvent,
    Workflow,
    extract_outline,
)
from .retrieval import Choice, LexicalIndex, query
from .retrieval_eval import RetrievalSample
from .validate import validate_workflow


class InvalidCorpusItemError(ValueError):
    def __init__(self, name: str, reason: str):
        self.name = name
        super().__init__(f"corpus item {name}: {reason}")


@dataclass(frozen=True)
class LabeledWorkflow:
    name: str
    requirement: str
    workflow: Workflow


@dataclass(frozen=True)
class CreateFlowSample:
    name: str
    input: str
    target: str

    def to_dict(self) -> dict:
        return {"name": self.name, "input": self.input, "target": self.target}


@dataclass(frozen=True)
class PopulateInputsSample:
    name: str
    requirement: str
    outline: str
    earlier_steps: str
    step_header: str
    target: str

    def render(self) -> str:
        """Single prompt-string rendering of the sample input."""
        parts = [f"requirement: {self.requirement}\n", self.outline]
        if self.earlier_steps:
            parts.append("populated:\n" + self.earlier_steps)
        parts.append("target:\n" + self.step_header)
        return "".join(parts)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "requirement": self.requirement,
            "outline": self.outline,
            "earlier_steps": self.earlier_steps,
            "step_header": self.step_header,
            "target": self.target,
        }


def load_corpus(
    directory: str | Path, catalog: EnvironmentCatalog
) -> list[LabeledWorkflow]:
    """Load and check every ``*.flow.yaml`` under a corpus directory.

    The requirement may live inline or in a sibling ``*.req.txt``. Items
    must validate against the catalog and carry an annotation on every
    step.
    """
    directory = Path(directory)
    items: list[LabeledWorkflow] = []
    for path in sorted(directory.glob(f"*{WORKFLOW_FILE_SUFFIX}")):
        name = path.name[: -len(WORKFLOW_FILE_SUFFIX)]
        workflow = parse_workflow(path.read_text(encoding="utf-8"))
        requirement = workflow.requirement
        if not requirement:
            req_path = path.with_name(name + REQUIREMENT_FILE_SUFFIX)
            if req_path.exists():
                requirement = req_path.read_text(encoding="utf-8").strip()
                workflow = dataclasses.replace(workflow, requirement=requirement)
        if not requirement:
            raise InvalidCorpusItemError(name, "no requirement (inline or .req.txt)")
        report = validate_workflow(workflow, catalog)
        if not report.ok:
            raise InvalidCorpusItemError(name, f"fails validation: {report.violations}")
        for step in workflow.steps:
            if not step.annotation:
                raise InvalidCorpusItemError(
                    name, f"step order {step.order} has no annotation"
                )
        items.append(LabeledWorkflow(name=name, requirement=requirement, workflow=workflow))
    return items


def split_create_flow(corpus: Sequence[LabeledWorkflow]) -> list[CreateFlowSample]:
    """One outline-generation sample per labeled workflow."""
    return [
        CreateFlowSample(
            name=item.name,
            input=item.requirement,
            target=serialize_outline(extract_outline(item.workflow)),
        )
        for item in corpus
    ]


def split_populate_inputs(
    corpus: Sequence[LabeledWorkflow],
) -> list[PopulateInputsSample]:
    """One input-generation sample per non-trigger step, with the populated
    earlier steps as sequential context."""
    samples: list[PopulateInputsSample] = []
    for item in corpus:
        outline = extract_outline(item.workflow)
        outline_text = serialize_outline(outline)
        ordered = sorted(item.workflow.steps, key=lambda s: s.order)
        for i, step in enumerate(ordered):
            earlier = "".join(serialize_step_row(s) for s in ordered[:i])
            samples.append(
                PopulateInputsSample(
                    name=f"{item.name}#{step.order}",
                    requirement=item.requirement,
                    outline=outline_text,
                    earlier_steps=earlier,
                    step_header=serialize_step_row(
                        OutlineRow(step.name, step.annotation, step.order, step.block)
                    ),
                    target=serialize_step_inputs(step.inputs),
                )
            )
    return samples


def reassemble(
    create_sample: CreateFlowSample,
    populate_samples: Sequence[PopulateInputsSample],
) -> LabeledWorkflow:
    """Inverse of the split: outline plus per-step inputs back to the
    original labeled workflow."""
    outline = parse_outline(create_sample.target)
    inputs_by_order: dict[int, tuple] = {}
    for sample in populate_samples:
        (row,) = parse_step_rows(sample.step_header)
        inputs_by_order[row.order] = parse_step_inputs(sample.target)
    steps = tuple(
        Step(
            row.name,
            row.annotation,
            row.order,
            row.block,
            inputs_by_order.get(row.order, ()),
        )
        for row in outline.rows
    )
    workflow = Workflow(
        trigger=outline.trigger, steps=steps, requirement=create_sample.input
    )
    return LabeledWorkflow(
        name=create_sample.name, requirement=create_sample.input, workflow=workflow
    )


def _context_table(
    workflow: Workflow, step: Step, catalog: EnvironmentCatalog
) -> str | None:
    definition = catalog.step(step.name)
    if definition is None:
        return None
    for iv in step.inputs:
        decl = definition.input_decl(iv.name)
        if decl and decl.kind is ValueKind.TABLE and isinstance(iv.value, Literal):
            return iv.value.text
    from .model import OutputRef

    for iv in step.inputs:
        decl = definition.input_decl(iv.name)
        if decl and decl.kind is ValueKind.REFERENCE and isinstance(iv.value, OutputRef):
            ref = iv.value
            if ref.step_ref == "trigger":
                return workflow.trigger.table
            target = workflow.step_at(ref.step_ref) if isinstance(ref.step_ref, int) else None
            if target is not None:
                return _context_table(workflow, target, catalog)
    return None


def _enum_values(catalog: EnvironmentCatalog, table: str, column: str) -> set[str]:
    schema = catalog.table(table)
    if schema is None:
        return set()
    col = schema.column(column)
    if col is None:
        return set()
    return {v.value for v in col.values}


def _condition_samples(
    query_text: str,
    condition: ConditionExpr,
    table: str,
    catalog: EnvironmentCatalog,
    warnings: list[str],
    where: str,
) -> list[RetrievalSample]:
    samples: list[RetrievalSample] = []
    schema = catalog.table(table)
    for conj in condition.conjuncts:
        if schema is None or schema.column(conj.column) is None:
            warnings.append(f"{where}: column {conj.column!r} not in {table!r}")
            continue
        samples.append(
            RetrievalSample(
                ArtifactKind.COLUMN_NAME, query_text, frozenset({conj.column}), table
            )
        )
        if (
            conj.operator is Operator.EQ
            and conj.operand is not None
            and conj.operand in _enum_values(catalog, table, conj.column)
        ):
            samples.append(
                RetrievalSample(
                    ArtifactKind.COLUMN_VALUE,
                    query_text,
                    frozenset({conj.operand}),
                    f"{table}.{conj.column}",
                )
            )
    return samples


def derive_retrieval_samples(
    corpus: Sequence[LabeledWorkflow], catalog: EnvironmentCatalog
) -> tuple[list[RetrievalSample], list[str]]:
    """Mine retrieval samples from the labels: step names are queried by
    annotation, tables/columns/values by the annotation of the step whose
    inputs reference them (the requirement stands in for the trigger).
    Unresolvable golds are skipped and reported as warnings."""
    samples: list[RetrievalSample] = []
    warnings: list[str] = []
    for item in corpus:
        workflow = item.workflow
        trigger = workflow.trigger
        if trigger.event is not TriggerEvent.SCHEDULED and trigger.table:
            if catalog.table(trigger.table) is None:
                warnings.append(f"{item.name}: trigger table {trigger.table!r} unknown")
            else:
                samples.append(
                    RetrievalSample(
                        ArtifactKind.TABLE_NAME,
                        item.requirement,
                        frozenset({trigger.table}),
                    )
                )
                if trigger.condition is not None:
                    samples.extend(
                        _condition_samples(
                            item.requirement,
                            trigger.condition,
                            trigger.table,
                            catalog,
                            warnings,
                            f"{item.name}:trigger",
                        )
                    )
        for step in workflow.steps:
            where = f"{item.name}#{step.order}"
            if catalog.step(step.name) is None:
                warnings.append(f"{where}: step {step.name!r} unknown")
            else:
                samples.append(
                    RetrievalSample(
                        ArtifactKind.STEP_NAME, step.annotation, frozenset({step.name})
                    )
                )
            definition = catalog.step(step.name)
            if definition is None:
                continue
            table = _context_table(workflow, step, catalog)
            for iv in step.inputs:
                decl = definition.input_decl(iv.name)
                if decl is None:
                    continue
                if decl.kind is ValueKind.TABLE and isinstance(iv.value, Literal):
                    if catalog.table(iv.value.text) is None:
                        warnings.append(f"{where}: table {iv.value.text!r} unknown")
                    else:
                        samples.append(
                            RetrievalSample(
                                ArtifactKind.TABLE_NAME,
                                step.annotation,
                                frozenset({iv.value.text}),
                            )
                        )
                elif decl.kind is ValueKind.CONDITION and isinstance(iv.value, ConditionExpr):
                    if table is None:
                        warnings.append(f"{where}: no table context for condition")
                    else:
                        samples.extend(
                            _condition_samples(
                                step.annotation, iv.value, table, catalog, warnings, where
                            )
                        )
    return samples, warnings


@dataclass(frozen=True)
class TeacherForcedSite:
    sample: RetrievalSample
    choices: tuple[Choice, ...]
    forced: bool
    gold_rank: int

    def to_dict(self) -> dict:
        return {
            **self.sample.to_dict(),
            "choices": [c.to_dict() for c in self.choices],
            "forced": self.forced,
            "gold_rank": self.gold_rank,
        }


def inject_teacher_forcing(
    samples: Sequence[RetrievalSample], index: LexicalIndex, k: int = 4
) -> list[TeacherForcedSite]:
    """Materialize every choices site with top-k retrieval results and the
    gold payload guaranteed present; a missed gold replaces the rank-k item
    (or appends when fewer than k choices exist) and is flagged forced."""
    sites: list[TeacherForcedSite] = []
    for sample in samples:
        ranked = query(index, sample.kind, sample.query, k=k, scope=sample.scope)
        choices = list(ranked.choices)
        gold_rank = next(
            (i + 1 for i, c in enumerate(choices) if c.payload in sample.gold), 0
        )
        forced = gold_rank == 0
        if forced:
            gold = sorted(sample.gold)[0]
            if len(choices) >= k:
                choices[k - 1] = Choice(gold, choices[k - 1].score, forced=True)
            else:
                choices.append(Choice(gold, 0.0, forced=True))
            gold_rank = len(choices[:k]) if len(choices) >= k else len(choices)
        sites.append(
            TeacherForcedSite(
                sample=sample,
                choices=tuple(choices[:k]),
                forced=forced,
                gold_rank=gold_rank,
            )
        )
    return sites


def audit_gold_presence(sites: Sequence[TeacherForcedSite]) -> float:
    """Fraction of sites whose choices contain a gold payload."""
    if not sites:
        return 1.0
    present = sum(
        1
        for site in sites
        if site.sample.gold & {c.payload for c in site.choices}
    )
    return present / len(sites)


def save_jsonl(records: Iterable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

"""The adaptive generation loop and the constrained-output check.

``run_sub_task`` drives a generator until Done: fragments accumulate into
the output text, and each choices request pauses generation, queries the
retriever (teacher-forcing the gold payload in when configured), injects
the ranked choices, and resumes. Retrieval failures inject an empty choice
list so generation continues at lower quality instead of aborting.

``constrain_output`` enforces that artifact-valued tokens in the output
come from the injected choices (or the catalog, for deterministic fields),
either rejecting or repairing violations.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from ..catalog import ArtifactKind, EnvironmentCatalog, ValueKind
from ..dsl import (
    parse_outline,
    parse_step_inputs,
    serialize_outline,
    serialize_step_inputs,
    WorkflowSyntaxError,
)
from ..model import (
    Conjunct,
    ConditionExpr,
    Literal,
    Outline,
    OutlineRow,
    StepInputValue,
)
from ..retrieval import Choice, LexicalIndex, RankedChoices, query
from .events import (
    ChoicesRequest,
    Done,
    Fragment,
    GenerationEvent,
    PromptState,
    SubTask,
    TeacherForcingConfig,
    TranscriptEntry,
    done_entry,
    fragment_entry,
    injection_entry,
    request_entry,
)

DEFAULT_BUDGET = 256
DEFAULT_K = 4


class GeneratorContract(Protocol):
    def next_event(self, state: PromptState) -> GenerationEvent: ...


class BudgetExceededError(RuntimeError):
    pass


class GeneratorFaultError(RuntimeError):
    pass


class SubTaskCancelled(RuntimeError):
    pass


@dataclass(frozen=True)
class ConstraintViolationRecord:
    slot: str
    token: str
    repaired_to: str | None = None

    def to_dict(self) -> dict:
        return {"slot": self.slot, "token": self.token, "repaired_to": self.repaired_to}


class ConstraintViolationError(RuntimeError):
    def __init__(self, violations: Sequence[ConstraintViolationRecord]):
        self.violations = tuple(violations)
        tokens = ", ".join(v.token for v in violations)
        super().__init__(f"output uses tokens outside the offered choices: {tokens}")


@dataclass(frozen=True)
class SubTaskResult:
    sub_task: SubTask
    text: str
    transcript: tuple[TranscriptEntry, ...]
    retrieval_call_count: int
    choices_per_site: tuple[RankedChoices, ...] = ()
    target_step_name: str | None = None
    constraint_violations: tuple[ConstraintViolationRecord, ...] = ()


def _force_gold(ranked: RankedChoices, gold: str, k: int) -> RankedChoices:
    if gold in ranked.payloads:
        return ranked
    choices = list(ranked.choices)
    if len(choices) >= k:
        # Deterministic forcing position: the gold replaces the rank-k item
        # and inherits its score so the ordering invariant holds.
        choices[k - 1] = Choice(gold, choices[k - 1].score, forced=True)
        choices = choices[:k]
    else:
        choices.append(Choice(gold, 0.0, forced=True))
    return dataclasses.replace(ranked, choices=tuple(choices))


def run_sub_task(
    generator: GeneratorContract,
    state: PromptState,
    index: LexicalIndex,
    k: int = DEFAULT_K,
    tf: TeacherForcingConfig | None = None,
    budget: int = DEFAULT_BUDGET,
    context_expansion: bool = False,
    observer: Callable[[TranscriptEntry], None] | None = None,
    should_abort: Callable[[], bool] | None = None,
) -> SubTaskResult:
    """Run one sub-task to completion and return its output and transcript."""
    if budget < 1:
        raise ValueError("budget must be positive")
    transcript: list[TranscriptEntry] = []
    sites: list[RankedChoices] = []
    retrieval_calls = 0

    def record(entry: TranscriptEntry) -> None:
        transcript.append(entry)
        if observer is not None:
            observer(entry)

    done = False
    for _ in range(budget):
        if should_abort is not None and should_abort():
            raise SubTaskCancelled("aborted at event boundary")
        try:
            event = generator.next_event(state)
        except (BudgetExceededError, SubTaskCancelled):
            raise
        except Exception as exc:
            raise GeneratorFaultError(f"generator raised: {exc}") from exc

        if isinstance(event, Fragment):
            record(fragment_entry(event.text))
            state.emitted += event.text
        elif isinstance(event, ChoicesRequest):
            if not event.query:
                raise GeneratorFaultError("choices request with empty query")
            record(request_entry(event))
            query_text = event.query
            if context_expansion and event.kind is ArtifactKind.COLUMN_NAME:
                query_text = f"{event.query} {state.requirement}"
            failed = False
            try:
                ranked = query(index, event.kind, query_text, k=k, scope=event.scope)
            except Exception:
                ranked = RankedChoices(query=query_text, kind=event.kind, choices=(), k=k)
                failed = True
            if tf is not None and tf.enabled:
                gold = tf.gold_for(len(sites))
                if gold is not None:
                    ranked = _force_gold(ranked, gold, k)
            retrieval_calls += 1
            sites.append(ranked)
            state.injected_choices.append(ranked)
            record(injection_entry(ranked, retrieval_failed=failed))
        elif isinstance(event, Done):
            record(done_entry())
            done = True
            break
        else:
            raise GeneratorFaultError(f"not a generation event: {event!r}")
    if not done:
        raise BudgetExceededError(f"no Done event within {budget} events")

    result = SubTaskResult(
        sub_task=state.sub_task,
        text=state.emitted,
        transcript=tuple(transcript),
        retrieval_call_count=retrieval_calls,
        choices_per_site=tuple(sites),
        target_step_name=state.target_row.name if state.target_row else None,
    )
    _check_parses(result)
    return result


def _check_parses(result: SubTaskResult) -> None:
    try:
        if result.sub_task is SubTask.CREATE_FLOW:
            parse_outline(result.text)
        else:
            parse_step_inputs(result.text)
    except WorkflowSyntaxError as exc:
        raise GeneratorFaultError(f"output does not parse: {exc}") from exc


def _sites_of(sites: Sequence[RankedChoices], kind: ArtifactKind) -> list[RankedChoices]:
    return [s for s in sites if s.kind is kind]


def _constrain_outline(
    outline: Outline,
    sites: Sequence[RankedChoices],
    catalog: EnvironmentCatalog,
) -> tuple[Outline, list[ConstraintViolationRecord]]:
    step_sites = _sites_of(sites, ArtifactKind.STEP_NAME)
    cursor = 0
    violations: list[ConstraintViolationRecord] = []
    rows: list[OutlineRow] = []
    for i, row in enumerate(outline.rows):
        definition = catalog.step(row.name)
        if definition is not None and definition.flow_control:
            rows.append(row)  # deterministic DSL vocabulary, no site consumed
            continue
        site = step_sites[cursor] if cursor < len(step_sites) else None
        if site is not None:
            cursor += 1
            if row.name in site.payloads:
                rows.append(row)
                continue
            repaired = site.top.payload if site.top else None
            violations.append(
                ConstraintViolationRecord(f"steps[{i}].name", row.name, repaired)
            )
            rows.append(
                dataclasses.replace(row, name=repaired) if repaired else row
            )
        elif definition is not None:
            rows.append(row)  # catalog-grounded, no retrieval happened here
        else:
            violations.append(ConstraintViolationRecord(f"steps[{i}].name", row.name))
            rows.append(row)
    return dataclasses.replace(outline, rows=tuple(rows)), violations


def _allowed_columns(
    sites: Sequence[RankedChoices], catalog: EnvironmentCatalog, table: str | None
) -> set[str]:
    allowed: set[str] = set()
    for site in _sites_of(sites, ArtifactKind.COLUMN_NAME):
        allowed.update(site.payloads)
    for site in _sites_of(sites, ArtifactKind.COLUMN_VALUE):
        for payload in site.payloads:
            column, sep, _ = payload.partition("=")
            if sep:
                allowed.add(column)
    schema = catalog.table(table) if table else None
    if schema is not None:
        allowed.update(c.name for c in schema.columns)
    return allowed


def _repair_column(sites: Sequence[RankedChoices]) -> str | None:
    for site in _sites_of(sites, ArtifactKind.COLUMN_NAME):
        if site.top:
            return site.top.payload
    for site in _sites_of(sites, ArtifactKind.COLUMN_VALUE):
        if site.top and "=" in site.top.payload:
            return site.top.payload.partition("=")[0]
    return None


def _constrain_inputs(
    inputs: tuple[StepInputValue, ...],
    sites: Sequence[RankedChoices],
    catalog: EnvironmentCatalog,
    step_name: str | None,
) -> tuple[tuple[StepInputValue, ...], list[ConstraintViolationRecord]]:
    definition = catalog.step(step_name) if step_name else None
    table_sites = _sites_of(sites, ArtifactKind.TABLE_NAME)
    table_cursor = 0
    violations: list[ConstraintViolationRecord] = []
    context_table: str | None = None
    out: list[StepInputValue] = []

    for iv in inputs:
        decl = definition.input_decl(iv.name) if definition else None
        if decl is not None and decl.kind is ValueKind.TABLE and isinstance(iv.value, Literal):
            site = table_sites[table_cursor] if table_cursor < len(table_sites) else None
            name = iv.value.text
            if site is not None:
                table_cursor += 1
                if name not in site.payloads:
                    repaired = site.top.payload if site.top else None
                    violations.append(
                        ConstraintViolationRecord(f"inputs.{iv.name}", name, repaired)
                    )
                    if repaired:
                        iv = StepInputValue(iv.name, Literal(repaired))
            elif catalog.table(name) is None:
                violations.append(ConstraintViolationRecord(f"inputs.{iv.name}", name))
            if isinstance(iv.value, Literal):
                context_table = iv.value.text
        out.append(iv)

    allowed_cols = _allowed_columns(sites, catalog, context_table)
    for idx, iv in enumerate(out):
        decl = definition.input_decl(iv.name) if definition else None
        if decl is None or decl.kind is not ValueKind.CONDITION:
            continue
        if not isinstance(iv.value, ConditionExpr):
            continue
        conjuncts: list[Conjunct] = []
        changed = False
        for conj in iv.value.conjuncts:
            if allowed_cols and conj.column not in allowed_cols:
                repaired = _repair_column(sites)
                violations.append(
                    ConstraintViolationRecord(
                        f"inputs.{iv.name}", conj.column, repaired
                    )
                )
                if repaired:
                    conj = Conjunct(repaired, conj.operator, conj.operand)
                    changed = True
            conjuncts.append(conj)
        if changed:
            out[idx] = StepInputValue(iv.name, ConditionExpr(tuple(conjuncts)))
    return tuple(out), violations


def constrain_output(
    result: SubTaskResult,
    choices_per_site: Sequence[RankedChoices] | None = None,
    catalog: EnvironmentCatalog | None = None,
    repair_mode: bool = True,
) -> SubTaskResult:
    """Check artifact-valued tokens against the injected choices.

    Tokens covered: outline step names (non-flow-control names must come
    from their aligned step-name site), table input literals, and condition
    columns. With ``repair_mode`` violations are replaced by the top choice
    of the corresponding site and recorded; without it a
    :class:`ConstraintViolationError` is raised.
    """
    if catalog is None:
        raise ValueError("constrain_output requires the catalog")
    sites = tuple(choices_per_site) if choices_per_site is not None else result.choices_per_site

    if result.sub_task is SubTask.CREATE_FLOW:
        outline, violations = _constrain_outline(parse_outline(result.text), sites, catalog)
        text = serialize_outline(outline)
    else:
        inputs, violations = _constrain_inputs(
            parse_step_inputs(result.text), sites, catalog, result.target_step_name
        )
        text = serialize_step_inputs(inputs)

    if violations and not repair_mode:
        raise ConstraintViolationError(violations)
    if not violations:
        return dataclasses.replace(result, constraint_violations=())
    return dataclasses.replace(
        result, text=text, constraint_violations=tuple(violations)
    )

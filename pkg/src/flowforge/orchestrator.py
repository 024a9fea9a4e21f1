"""Session orchestration: outline first, then inputs step by step.

The orchestrator is deliberately plain, non-AI code. It runs the outline
sub-task, streams the outline to observers, then loops over the steps
calling the input sub-task in order (or in parallel batches with
outline-only context). Sessions support human steering: continue up to a
step, stop keeping the partial workflow, or modify the requirement which
supersedes the session with a fresh linked one.
"""

from __future__ import annotations

import dataclasses
import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator

from .catalog import EnvironmentCatalog
from .dsl import parse_outline, parse_step_inputs, serialize_outline, serialize_workflow
from .generation import (
    PromptState,
    SubTaskCancelled,
    SubTaskResult,
    TranscriptEntry,
    constrain_output,
    create_generator,
    run_sub_task,
)
from .model import Outline, Step, Workflow
from .retrieval import LexicalIndex


class Phase(str, Enum):
    IDLE = "idle"
    OUTLINE_READY = "outline_ready"
    POPULATING = "populating"
    COMPLETE = "complete"
    STOPPED = "stopped"
    FAILED = "failed"


class InvalidPhaseError(RuntimeError):
    def __init__(self, expected: str, actual: Phase):
        super().__init__(f"session must be {expected}, is {actual.value}")
        self.actual = actual


class GenerationFailedError(RuntimeError):
    pass


@dataclass(frozen=True)
class OrchestrationConfig:
    generator_name: str = "reference"
    generator_config: dict = field(default_factory=dict)
    k: int = 4
    repair_mode: bool = True
    context_expansion: bool = False
    budget: int = 256
    auto_continue: bool = False
    event_log_dir: str | Path | None = None


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    type: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "type": self.type, "payload": self.payload}


class GenerationSession:
    """One generation run; mutated only by the owning orchestrator."""

    def __init__(
        self,
        requirement: str,
        config: "OrchestrationConfig",
        parent_id: str | None = None,
    ):
        self.id = uuid.uuid4().hex[:12]
        self.parent_id = parent_id
        self.requirement = requirement
        self.config = config
        self.phase = Phase.IDLE
        self.populating_order: int | None = None
        self.outline: Outline | None = None
        self.populated_steps: list[Step] = []
        self.events: list[SessionEvent] = []
        self.superseded_by: str | None = None
        self.error: str | None = None
        self.stop_requested = False
        self.busy = False
        self.lock = threading.RLock()
        self.changed = threading.Condition(self.lock)

    @property
    def workflow(self) -> Workflow | None:
        """Partial workflow: populated steps plus outline-only remainder."""
        if self.outline is None:
            return None
        populated = {s.order: s for s in self.populated_steps}
        steps = tuple(
            populated.get(row.order, Step(row.name, row.annotation, row.order, row.block))
            for row in self.outline.rows
        )
        return Workflow(
            trigger=self.outline.trigger, steps=steps, requirement=self.requirement
        )

    def events_since(self, after_seq: int = 0) -> list[SessionEvent]:
        with self.lock:
            return [e for e in self.events if e.seq > after_seq]

    def wait_for_change(self, last_seq: int, timeout: float) -> None:
        with self.changed:
            if self.events and self.events[-1].seq > last_seq:
                return
            self.changed.wait(timeout)

    @property
    def terminal(self) -> bool:
        return self.phase in (Phase.COMPLETE, Phase.STOPPED, Phase.FAILED)


class Orchestrator:
    def __init__(
        self,
        catalog: EnvironmentCatalog,
        index: LexicalIndex,
        config: OrchestrationConfig | None = None,
    ):
        self.catalog = catalog
        self.index = index
        self.config = config or OrchestrationConfig()
        self.sessions: dict[str, GenerationSession] = {}
        self._sessions_lock = threading.Lock()

    # -- session bookkeeping ------------------------------------------------

    def get(self, session_id: str) -> GenerationSession:
        with self._sessions_lock:
            return self.sessions[session_id]

    def _register(self, session: GenerationSession) -> None:
        with self._sessions_lock:
            self.sessions[session.id] = session

    def _emit(self, session: GenerationSession, type_: str, payload: dict) -> None:
        with session.changed:
            event = SessionEvent(len(session.events) + 1, type_, payload)
            session.events.append(event)
            session.changed.notify_all()
        if session.config.event_log_dir is not None:
            log_dir = Path(session.config.event_log_dir)
            log_dir.mkdir(parents=True, exist_ok=True)
            with open(log_dir / f"{session.id}.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")

    def _generator(self, config: OrchestrationConfig):
        return create_generator(
            config.generator_name, self.catalog, config.generator_config
        )

    def _observer(
        self, session: GenerationSession, step_order: int | None
    ) -> Callable[[TranscriptEntry], None]:
        pending: list[dict] = []

        def observe(entry: TranscriptEntry) -> None:
            if entry.type == "choices_request":
                pending.append(entry.data)
            elif entry.type == "choices_injected" and pending:
                request = pending.pop()
                self._emit(
                    session,
                    "choices_offered",
                    {
                        "step_order": step_order,
                        "kind": request["kind"],
                        "query": request["query"],
                        "scope": request.get("scope"),
                        "choices": entry.data["choices"]["choices"],
                        "retrieval_failed": entry.data.get("retrieval_failed", False),
                    },
                )

        return observe

    # -- lifecycle ----------------------------------------------------------

    def start_session(
        self, requirement: str, config: OrchestrationConfig | None = None
    ) -> GenerationSession:
        """Create a session and generate its outline; with auto_continue the
        session runs through population to completion."""
        if not requirement or not requirement.strip():
            raise ValueError("requirement must be non-empty")
        session = GenerationSession(requirement, config or self.config)
        self._register(session)
        self.generate_outline(session)
        if session.config.auto_continue and session.phase is Phase.OUTLINE_READY:
            self.continue_session(session.id)
        return session

    def generate_outline(self, session: GenerationSession) -> GenerationSession:
        if session.phase is not Phase.IDLE:
            raise InvalidPhaseError("idle", session.phase)
        try:
            state = PromptState.for_create_flow(session.requirement)
            result = run_sub_task(
                self._generator(session.config),
                state,
                self.index,
                k=session.config.k,
                budget=session.config.budget,
                context_expansion=session.config.context_expansion,
                observer=self._observer(session, None),
            )
            result = constrain_output(
                result, catalog=self.catalog, repair_mode=session.config.repair_mode
            )
            session.outline = parse_outline(result.text)
            with session.lock:
                session.phase = Phase.OUTLINE_READY
            self._emit(session, "outline", {"outline": serialize_outline(session.outline)})
        except Exception as exc:
            self._fail(session, exc)
        return session

    def _fail(self, session: GenerationSession, exc: Exception) -> None:
        with session.lock:
            session.phase = Phase.FAILED
            session.error = str(exc)
        self._emit(session, "failed", {"error": str(exc)})
        raise GenerationFailedError(str(exc)) from exc

    def _populate_one(
        self,
        session: GenerationSession,
        earlier: list[Step],
        row_index: int,
        observer_order: int | None = None,
        sequential: bool = True,
    ) -> Step:
        assert session.outline is not None
        row = session.outline.rows[row_index]
        state = PromptState.for_populate_inputs(
            session.requirement,
            session.outline,
            earlier if sequential else [],
            row,
        )
        result = run_sub_task(
            self._generator(session.config),
            state,
            self.index,
            k=session.config.k,
            budget=session.config.budget,
            context_expansion=session.config.context_expansion,
            observer=self._observer(session, observer_order),
            should_abort=lambda: session.stop_requested,
        )
        result = constrain_output(
            result, catalog=self.catalog, repair_mode=session.config.repair_mode
        )
        inputs = parse_step_inputs(result.text)
        return Step(row.name, row.annotation, row.order, row.block, inputs)

    def continue_session(
        self, session_id: str, up_to: int | None = None
    ) -> GenerationSession:
        """Populate inputs sequentially through ``up_to`` (default: all)."""
        session = self.get(session_id)
        with session.lock:
            if session.phase not in (Phase.OUTLINE_READY, Phase.POPULATING):
                raise InvalidPhaseError("outline_ready or populating", session.phase)
            session.busy = True
        assert session.outline is not None
        rows = session.outline.rows
        last = up_to if up_to is not None else len(rows)
        try:
            order = session.populating_order or 1
            while order <= last and order <= len(rows):
                if session.stop_requested:
                    return self._finalize_stop(session)
                with session.lock:
                    session.phase = Phase.POPULATING
                    session.populating_order = order
                step = self._populate_one(
                    session, session.populated_steps, order - 1, observer_order=order
                )
                session.populated_steps.append(step)
                self._emit(
                    session,
                    "step_populated",
                    {
                        "order": step.order,
                        "name": step.name,
                        "inputs": _inputs_text(step),
                    },
                )
                order += 1
            if len(session.populated_steps) == len(rows):
                with session.lock:
                    session.phase = Phase.COMPLETE
                    session.populating_order = None
                self._emit(
                    session,
                    "completed",
                    {"workflow": serialize_workflow(session.workflow)},
                )
            else:
                with session.lock:
                    session.phase = Phase.POPULATING
                    session.populating_order = order
        except SubTaskCancelled:
            return self._finalize_stop(session)
        except GenerationFailedError:
            raise
        except Exception as exc:
            self._fail(session, exc)
        finally:
            with session.lock:
                session.busy = False
        return session

    def batch_populate(self, session_id: str, max_workers: int = 4) -> GenerationSession:
        """Populate all steps concurrently with outline-only context; the
        result is assembled in outline order regardless of completion order."""
        session = self.get(session_id)
        with session.lock:
            if session.phase is not Phase.OUTLINE_READY:
                raise InvalidPhaseError("outline_ready", session.phase)
            session.busy = True
            session.phase = Phase.POPULATING
        assert session.outline is not None
        rows = session.outline.rows
        try:
            if rows:
                with ThreadPoolExecutor(max_workers=max_workers) as pool:
                    steps = list(
                        pool.map(
                            lambda i: self._populate_one(
                                session, [], i, observer_order=rows[i].order,
                                sequential=False,
                            ),
                            range(len(rows)),
                        )
                    )
            else:
                steps = []
            steps.sort(key=lambda s: s.order)
            for step in steps:
                session.populated_steps.append(step)
                self._emit(
                    session,
                    "step_populated",
                    {"order": step.order, "name": step.name, "inputs": _inputs_text(step)},
                )
            with session.lock:
                session.phase = Phase.COMPLETE
                session.populating_order = None
            self._emit(
                session, "completed", {"workflow": serialize_workflow(session.workflow)}
            )
        except SubTaskCancelled:
            return self._finalize_stop(session)
        except Exception as exc:
            self._fail(session, exc)
        finally:
            with session.lock:
                session.busy = False
        return session

    def _finalize_stop(self, session: GenerationSession) -> GenerationSession:
        with session.lock:
            session.phase = Phase.STOPPED
            session.busy = False
        workflow = session.workflow
        self._emit(
            session,
            "stopped",
            {"workflow": serialize_workflow(workflow) if workflow else ""},
        )
        return session

    def stop_session(self, session_id: str, wait: float = 30.0) -> GenerationSession:
        """Stop at the next event boundary, keeping the partial workflow."""
        session = self.get(session_id)
        with session.lock:
            if session.phase not in (Phase.OUTLINE_READY, Phase.POPULATING):
                raise InvalidPhaseError("outline_ready or populating", session.phase)
            session.stop_requested = True
            busy = session.busy
        if not busy:
            return self._finalize_stop(session)
        with session.changed:
            while not session.terminal:
                if not session.changed.wait(wait):
                    break
        return session

    def modify_requirement(self, session_id: str, new_requirement: str) -> GenerationSession:
        """Supersede the session with a fresh one for the new requirement."""
        if not new_requirement or not new_requirement.strip():
            raise ValueError("requirement must be non-empty")
        session = self.get(session_id)
        with session.lock:
            if session.phase is Phase.FAILED:
                raise InvalidPhaseError("any non-failed phase", session.phase)
            session.stop_requested = True
        fresh = GenerationSession(new_requirement, session.config, parent_id=session.id)
        self._register(fresh)
        with session.lock:
            session.superseded_by = fresh.id
        return fresh


def _inputs_text(step: Step) -> str:
    from .dsl import serialize_step_inputs

    return serialize_step_inputs(step.inputs)


def assemble_workflow(
    outline: Outline, steps_inputs: dict[int, tuple], requirement: str = ""
) -> Workflow:
    """Compose a workflow from an outline and per-order input tuples."""
    steps = tuple(
        Step(
            row.name,
            row.annotation,
            row.order,
            row.block,
            steps_inputs.get(row.order, ()),
        )
        for row in outline.rows
    )
    return Workflow(trigger=outline.trigger, steps=steps, requirement=requirement)

"""Wire types of the adaptive generation protocol.

A generator produces a stream of events: text fragments, requests for
environment choices, and a final done marker. The engine answers each
choices request by querying the retriever and injecting the ranked
choices back into the prompt state before the generator resumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Union

from ..catalog import ArtifactKind
from ..dsl import serialize_outline, serialize_step_row, serialize_workflow
from ..model import Outline, OutlineRow, Step
from ..retrieval import Choice, RankedChoices


class SubTask(str, Enum):
    CREATE_FLOW = "create_flow"
    POPULATE_INPUTS = "populate_inputs"


@dataclass(frozen=True)
class Fragment:
    text: str


@dataclass(frozen=True)
class ChoicesRequest:
    kind: ArtifactKind
    query: str
    scope: str | None = None


@dataclass(frozen=True)
class Done:
    pass


GenerationEvent = Union[Fragment, ChoicesRequest, Done]


@dataclass
class PromptState:
    """Accumulated generation context for one sub-task run."""

    sub_task: SubTask
    requirement: str
    outline: Outline | None = None
    earlier_steps: tuple[Step, ...] = ()
    target_row: OutlineRow | None = None
    injected_choices: list[RankedChoices] = field(default_factory=list)
    emitted: str = ""

    @staticmethod
    def for_create_flow(requirement: str) -> "PromptState":
        if not requirement.strip():
            raise ValueError("requirement must be non-empty")
        return PromptState(sub_task=SubTask.CREATE_FLOW, requirement=requirement)

    @staticmethod
    def for_populate_inputs(
        requirement: str,
        outline: Outline,
        earlier_steps: Iterable[Step],
        target_row: OutlineRow,
    ) -> "PromptState":
        earlier = tuple(earlier_steps)
        for step in earlier:
            if step.order >= target_row.order:
                raise ValueError(
                    f"context step order {step.order} is not earlier than "
                    f"target order {target_row.order}"
                )
        return PromptState(
            sub_task=SubTask.POPULATE_INPUTS,
            requirement=requirement,
            outline=outline,
            earlier_steps=earlier,
            target_row=target_row,
        )

    @property
    def context(self) -> str:
        """Serialized prior context as a generator would see it."""
        parts: list[str] = []
        if self.outline is not None:
            parts.append(serialize_outline(self.outline))
        if self.earlier_steps:
            parts.append("populated:\n")
            parts.extend(serialize_step_row(s) for s in self.earlier_steps)
        if self.target_row is not None:
            parts.append("target:\n" + serialize_step_row(self.target_row))
        return "".join(parts)

    def render_prompt(self) -> str:
        parts = [f"requirement: {self.requirement}\n", self.context]
        for ranked in self.injected_choices:
            parts.append(render_choices_block(ranked))
        parts.append(self.emitted)
        return "".join(parts)


def render_choices_block(ranked: RankedChoices) -> str:
    """Numbered, payload-only rendering of injected choices."""
    lines = [f"choices: {ranked.kind.value}"]
    for i, choice in enumerate(ranked.choices, start=1):
        lines.append(f"{i}. {choice.payload}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TeacherForcingConfig:
    """When enabled, the gold payload for each request site (in request
    order) is guaranteed to appear among the injected choices."""

    enabled: bool = False
    gold: tuple[str | None, ...] = ()

    def gold_for(self, site: int) -> str | None:
        if not self.enabled or site >= len(self.gold):
            return None
        return self.gold[site]


@dataclass(frozen=True)
class TranscriptEntry:
    type: str
    data: dict

    def to_dict(self) -> dict:
        return {"type": self.type, **self.data}

    @staticmethod
    def from_dict(raw: dict) -> "TranscriptEntry":
        data = dict(raw)
        type_ = data.pop("type")
        return TranscriptEntry(type_, data)


def fragment_entry(text: str) -> TranscriptEntry:
    return TranscriptEntry("fragment", {"text": text})


def request_entry(request: ChoicesRequest) -> TranscriptEntry:
    return TranscriptEntry(
        "choices_request",
        {"kind": request.kind.value, "query": request.query, "scope": request.scope},
    )


def injection_entry(
    ranked: RankedChoices, retrieval_failed: bool = False
) -> TranscriptEntry:
    return TranscriptEntry(
        "choices_injected",
        {"choices": ranked.to_dict(), "retrieval_failed": retrieval_failed},
    )


def done_entry() -> TranscriptEntry:
    return TranscriptEntry("done", {})


def events_from_transcript(transcript: Iterable[TranscriptEntry]) -> list[GenerationEvent]:
    """Generator-side events of a transcript, replayable by a scripted
    generator (injections are the engine's side and are skipped)."""
    events: list[GenerationEvent] = []
    for entry in transcript:
        if entry.type == "fragment":
            events.append(Fragment(entry.data["text"]))
        elif entry.type == "choices_request":
            events.append(
                ChoicesRequest(
                    kind=ArtifactKind(entry.data["kind"]),
                    query=entry.data["query"],
                    scope=entry.data.get("scope"),
                )
            )
        elif entry.type == "done":
            events.append(Done())
    return events


def choices_from_transcript(transcript: Iterable[TranscriptEntry]) -> list[RankedChoices]:
    """Injected choice lists, in request order."""
    out = []
    for entry in transcript:
        if entry.type == "choices_injected":
            raw = entry.data["choices"]
            out.append(
                RankedChoices(
                    query=raw["query"],
                    kind=ArtifactKind(raw["kind"]),
                    k=raw["k"],
                    choices=tuple(
                        Choice(c["payload"], c["score"], c.get("forced", False))
                        for c in raw["choices"]
                    ),
                )
            )
    return out


def is_well_bracketed(transcript: Iterable[TranscriptEntry]) -> bool:
    """Every choices request is immediately followed by its injection and
    nothing follows the done marker."""
    entries = list(transcript)
    for i, entry in enumerate(entries):
        if entry.type == "choices_request":
            if i + 1 >= len(entries) or entries[i + 1].type != "choices_injected":
                return False
        if entry.type == "choices_injected":
            if i == 0 or entries[i - 1].type != "choices_request":
                return False
        if entry.type == "done" and i != len(entries) - 1:
            return False
    return True


def save_transcript(transcript: Iterable[TranscriptEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in transcript:
            fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")


def load_transcript(path: str | Path) -> list[TranscriptEntry]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(TranscriptEntry.from_dict(json.loads(line)))
    return out

"""Generator implementations and the plug-in registry.

Generators satisfy :class:`~flowforge.generation.engine.GeneratorContract`:
given the prompt state, produce the next event. Three ship here: a
scripted generator that replays recorded events, a coroutine adapter that
lets rule pipelines suspend on choices requests, and a thin HTTP client
for an external model endpoint. A text-level adapter converts raw output
that uses a literal ``choices:`` sentinel line into structured events.
"""

from __future__ import annotations

import re
from typing import Callable, Generator, Iterable, Sequence

import httpx

from ..catalog import ArtifactKind, EnvironmentCatalog
from ..retrieval import RankedChoices
from .events import (
    ChoicesRequest,
    Done,
    Fragment,
    GenerationEvent,
    PromptState,
    TranscriptEntry,
    events_from_transcript,
)

Pipeline = Generator[GenerationEvent, "RankedChoices | None", None]


class ScriptedGenerator:
    """Replays a fixed event sequence, e.g. a recorded transcript."""

    def __init__(self, events: Sequence[GenerationEvent]):
        self._events = list(events)
        self._pos = 0

    @staticmethod
    def from_transcript(transcript: Iterable[TranscriptEntry]) -> "ScriptedGenerator":
        return ScriptedGenerator(events_from_transcript(transcript))

    def next_event(self, state: PromptState) -> GenerationEvent:
        if self._pos >= len(self._events):
            return Done()
        event = self._events[self._pos]
        self._pos += 1
        return event


class PipelineGenerator:
    """Adapts a coroutine pipeline to the pull-based generator contract.

    The pipeline yields events; after a choices request the engine injects
    the ranked choices into the state and this adapter feeds them back in
    as the value of the ``yield``.
    """

    def __init__(self, factory: Callable[[PromptState], Pipeline]):
        self._factory = factory
        self._pipeline: Pipeline | None = None
        self._awaiting_choices = False
        self._finished = False

    def next_event(self, state: PromptState) -> GenerationEvent:
        if self._finished:
            raise RuntimeError("generator already emitted Done")
        try:
            if self._pipeline is None:
                self._pipeline = self._factory(state)
                event = next(self._pipeline)
            elif self._awaiting_choices:
                event = self._pipeline.send(state.injected_choices[-1])
            else:
                event = self._pipeline.send(None)
        except StopIteration:
            self._finished = True
            return Done()
        self._awaiting_choices = isinstance(event, ChoicesRequest)
        return event


class HttpGenerator:
    """Client for an external model served over HTTP.

    POSTs the rendered prompt state to the endpoint and expects one event
    back: ``{"type": "fragment"|"choices_request"|"done", ...}``.
    """

    def __init__(self, endpoint: str, client: httpx.Client | None = None):
        self._endpoint = endpoint
        self._client = client or httpx.Client(timeout=30.0)

    def next_event(self, state: PromptState) -> GenerationEvent:
        response = self._client.post(
            self._endpoint,
            json={
                "sub_task": state.sub_task.value,
                "prompt": state.render_prompt(),
            },
        )
        response.raise_for_status()
        data = response.json()
        type_ = data.get("type")
        if type_ == "fragment":
            return Fragment(data["text"])
        if type_ == "choices_request":
            return ChoicesRequest(
                kind=ArtifactKind(data["kind"]),
                query=data["query"],
                scope=data.get("scope"),
            )
        if type_ == "done":
            return Done()
        raise ValueError(f"endpoint returned unknown event type {type_!r}")


_SENTINEL_RE = re.compile(
    r"^choices:\s*(?P<kind>step_name|table_name|column_name|column_value)"
    r"(?:\s*@(?P<scope>[A-Za-z0-9_.]+))?\s*\|\s*(?P<query>.+)$"
)


def parse_sentinel_text(text: str) -> list[GenerationEvent]:
    """Convert raw generator output that marks retrieval points with a
    literal sentinel line (``choices: <kind>[@scope] | <query>``) into
    structured events."""
    events: list[GenerationEvent] = []
    buffer: list[str] = []

    def flush() -> None:
        if buffer:
            events.append(Fragment("".join(buffer)))
            buffer.clear()

    for line in text.splitlines(keepends=True):
        match = _SENTINEL_RE.match(line.strip())
        if match:
            flush()
            events.append(
                ChoicesRequest(
                    kind=ArtifactKind(match.group("kind")),
                    query=match.group("query").strip(),
                    scope=match.group("scope"),
                )
            )
        else:
            buffer.append(line)
    flush()
    events.append(Done())
    return events


GeneratorFactory = Callable[[EnvironmentCatalog, dict], object]

_REGISTRY: dict[str, GeneratorFactory] = {}


def register_generator(name: str) -> Callable[[GeneratorFactory], GeneratorFactory]:
    def wrap(factory: GeneratorFactory) -> GeneratorFactory:
        _REGISTRY[name] = factory
        return factory

    return wrap


def available_generators() -> list[str]:
    return sorted(_REGISTRY)


def create_generator(name: str, catalog: EnvironmentCatalog, config: dict | None = None):
    if name not in _REGISTRY:
        raise KeyError(
            f"unknown generator {name!r}; registered: {available_generators()}"
        )
    return _REGISTRY[name](catalog, config or {})


@register_generator("scripted")
def _scripted_factory(catalog: EnvironmentCatalog, config: dict) -> ScriptedGenerator:
    from .events import load_transcript

    return ScriptedGenerator.from_transcript(load_transcript(config["transcript_path"]))


@register_generator("http")
def _http_factory(catalog: EnvironmentCatalog, config: dict) -> HttpGenerator:
    return HttpGenerator(config["endpoint"], config.get("client"))

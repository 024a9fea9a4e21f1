"""Lexical retrieval over environment artifacts.

Artifacts are indexed offline per kind (columns and values additionally per
table) as IDF-weighted bags of word tokens and character trigrams. Queries
score by cosine similarity over the full surface text (name, label,
description); a query that exactly equals an artifact's name scores 1.0,
so exact-name lookups always rank first. Everything is deterministic:
ties break on payload order and floats are built in a fixed order.
"""

from __future__ import annotations

import json
import math
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import ArtifactDoc, ArtifactKind, EnvironmentCatalog, list_artifacts

# Weight of trigram features relative to whole-word features.
TRIGRAM_WEIGHT = 0.4

_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_NON_WORD_RE = re.compile(r"[^a-z0-9]+")


class StaleIndexError(RuntimeError):
    """Index was built from a different catalog version than requested."""


def normalize(text: str) -> str:
    text = _CAMEL_RE.sub(" ", text)
    text = unicodedata.normalize("NFKD", text)
    text = text.encode("ascii", "ignore").decode("ascii").lower()
    return _NON_WORD_RE.sub(" ", text).strip()


def fold_plural(token: str) -> str:
    # Minimal plural folding; suffix detail survives in the trigrams.
    if len(token) > 3 and token.endswith("s") and not token.endswith(("ss", "us", "is")):
        return token[:-1]
    return token


def features(text: str) -> dict[str, float]:
    """Raw term-frequency feature bag: word tokens plus char trigrams."""
    norm = normalize(text)
    if not norm:
        return {}
    bag: dict[str, float] = {}
    for token in norm.split():
        key = "w:" + fold_plural(token)
        bag[key] = bag.get(key, 0.0) + 1.0
    padded = f" {norm} "
    for i in range(len(padded) - 2):
        key = "3:" + padded[i:i + 3]
        bag[key] = bag.get(key, 0.0) + TRIGRAM_WEIGHT
    return bag


@dataclass(frozen=True)
class Choice:
    payload: str
    score: float
    forced: bool = False

    def to_dict(self) -> dict:
        return {"payload": self.payload, "score": self.score, "forced": self.forced}


@dataclass(frozen=True)
class RankedChoices:
    query: str
    kind: ArtifactKind
    choices: tuple[Choice, ...]
    k: int

    @property
    def payloads(self) -> tuple[str, ...]:
        return tuple(c.payload for c in self.choices)

    @property
    def top(self) -> Choice | None:
        return self.choices[0] if self.choices else None

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "kind": self.kind.value,
            "k": self.k,
            "choices": [c.to_dict() for c in self.choices],
        }


@dataclass
class _IndexedDoc:
    doc: ArtifactDoc
    norm_name: str
    full_vec: dict[str, float]
    full_norm: float


@dataclass
class _SubIndex:
    idf: dict[str, float]
    docs: list[_IndexedDoc]


@dataclass
class LexicalIndex:
    catalog_version: int
    fingerprint: str
    subs: dict[tuple[str, str], _SubIndex] = field(default_factory=dict)

    def sub_for(self, kind: ArtifactKind, scope_key: str) -> _SubIndex | None:
        return self.subs.get((kind.value, scope_key))


def _scope_key(kind: ArtifactKind, doc: ArtifactDoc) -> str:
    if kind in (ArtifactKind.COLUMN_NAME, ArtifactKind.COLUMN_VALUE):
        return doc.table or ""
    return ""


def _weighted(raw: dict[str, float], idf: dict[str, float]) -> tuple[dict[str, float], float]:
    vec = {term: tf * idf.get(term, _DEFAULT_IDF) for term, tf in raw.items()}
    norm = math.sqrt(sum(w * w for w in vec.values()))
    return vec, norm


_DEFAULT_IDF = 1.0


def _build_sub(docs: list[ArtifactDoc], names: list[str]) -> _SubIndex:
    raw_fulls = [features(d.text) for d in docs]
    df: dict[str, int] = {}
    for raw in raw_fulls:
        for term in raw:
            df[term] = df.get(term, 0) + 1
    n = len(docs)
    idf = {term: math.log((1 + n) / (1 + count)) + 1.0 for term, count in df.items()}
    indexed = []
    for doc, raw_full, name in zip(docs, raw_fulls, names):
        full_vec, full_norm = _weighted(raw_full, idf)
        indexed.append(_IndexedDoc(doc, normalize(name), full_vec, full_norm))
    return _SubIndex(idf=idf, docs=indexed)


def build_index(catalog: EnvironmentCatalog) -> LexicalIndex:
    """Index every artifact kind; columns and values are bucketed by table."""
    index = LexicalIndex(catalog_version=catalog.version, fingerprint=catalog.fingerprint)
    groups: dict[tuple[str, str], list[ArtifactDoc]] = {}

    def add(kind: ArtifactKind, docs: list[ArtifactDoc]) -> None:
        for doc in docs:
            groups.setdefault((kind.value, _scope_key(kind, doc)), []).append(doc)

    add(ArtifactKind.STEP_NAME, list_artifacts(catalog, ArtifactKind.STEP_NAME))
    add(ArtifactKind.TABLE_NAME, list_artifacts(catalog, ArtifactKind.TABLE_NAME))
    for table in sorted(catalog.tables):
        add(ArtifactKind.COLUMN_NAME, list_artifacts(catalog, ArtifactKind.COLUMN_NAME, table))
        add(ArtifactKind.COLUMN_VALUE, list_artifacts(catalog, ArtifactKind.COLUMN_VALUE, table))

    for key, docs in sorted(groups.items()):
        docs = sorted(docs, key=lambda d: d.id)
        names = [_match_name(d) for d in docs]
        index.subs[key] = _build_sub(docs, names)
    return index


def _match_name(doc: ArtifactDoc) -> str:
    # The name a query must equal for guaranteed rank 1: the payload for
    # steps/tables/columns, "column=value" style identity for values.
    return doc.payload


def _cosine(
    qvec: dict[str, float], qnorm: float, dvec: dict[str, float], dnorm: float
) -> float:
    if qnorm == 0.0 or dnorm == 0.0:
        return 0.0
    if len(dvec) < len(qvec):
        qvec, dvec = dvec, qvec
    dot = 0.0
    for term, w in qvec.items():
        dw = dvec.get(term)
        if dw is not None:
            dot += w * dw
    # Identical vectors can round a hair above 1.0; keep scores in [0, 1].
    return min(1.0, dot / (qnorm * dnorm))


def query(
    index: LexicalIndex,
    kind: ArtifactKind,
    query_text: str,
    k: int = 4,
    scope: str | None = None,
    current_catalog: EnvironmentCatalog | None = None,
) -> RankedChoices:
    """Rank artifacts of one kind against the query text.

    ``scope`` is a table name for COLUMN_NAME; for COLUMN_VALUE it may be a
    table or ``table.column``. Table-scoped value queries return
    ``column=value`` payloads so one choice pins both column and value.
    Passing ``current_catalog`` asserts freshness and raises
    :class:`StaleIndexError` on version mismatch.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if current_catalog is not None and current_catalog.version != index.catalog_version:
        raise StaleIndexError(
            f"index built from catalog v{index.catalog_version}, "
            f"current is v{current_catalog.version}"
        )
    column_filter = None
    scope_key = ""
    if kind in (ArtifactKind.COLUMN_NAME, ArtifactKind.COLUMN_VALUE):
        if not scope:
            raise ValueError(f"{kind.value} queries require a table scope")
        scope_key, _, column_filter = scope.partition(".")
        column_filter = column_filter or None
    sub = index.sub_for(kind, scope_key)
    if sub is None:
        return RankedChoices(query=query_text, kind=kind, choices=(), k=k)

    qraw = features(query_text)
    qvec, qnorm = _weighted(qraw, sub.idf)
    qnorm_name = normalize(query_text)
    scored: list[tuple[float, str]] = []
    for item in sub.docs:
        if column_filter is not None and item.doc.column != column_filter:
            continue
        payload = item.doc.payload
        if kind is ArtifactKind.COLUMN_VALUE and column_filter is None:
            payload = f"{item.doc.column}={item.doc.payload}"
        if qnorm_name and qnorm_name == item.norm_name:
            score = 1.0
        else:
            score = _cosine(qvec, qnorm, item.full_vec, item.full_norm)
        scored.append((score, payload))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    choices = tuple(Choice(payload, score) for score, payload in scored[:k])
    return RankedChoices(query=query_text, kind=kind, choices=choices, k=k)


def save_index(index: LexicalIndex, path: str | Path) -> None:
    """Persist as a structured-text artifact (JSON)."""
    data = {
        "catalog_version": index.catalog_version,
        "fingerprint": index.fingerprint,
        "subs": {
            f"{kind}|{scope}": {
                "idf": sub.idf,
                "docs": [
                    {
                        "id": item.doc.id,
                        "kind": item.doc.kind.value,
                        "text": item.doc.text,
                        "payload": item.doc.payload,
                        "table": item.doc.table,
                        "column": item.doc.column,
                    }
                    for item in sub.docs
                ],
            }
            for (kind, scope), sub in sorted(index.subs.items())
        },
    }
    Path(path).write_text(json.dumps(data, sort_keys=True), encoding="utf-8")


def load_index(path: str | Path) -> LexicalIndex:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    index = LexicalIndex(
        catalog_version=data["catalog_version"], fingerprint=data["fingerprint"]
    )
    for key, sub_data in data["subs"].items():
        kind, _, scope = key.partition("|")
        docs = [
            ArtifactDoc(
                id=d["id"],
                kind=ArtifactKind(d["kind"]),
                text=d["text"],
                payload=d["payload"],
                table=d["table"],
                column=d["column"],
            )
            for d in sub_data["docs"]
        ]
        index.subs[(kind, scope)] = _build_sub(docs, [_match_name(d) for d in docs])
    return index

"""Retrieval quality measurement: Recall@k, Hit Rate, and MRR.

Samples pair a query (requirement or step annotation) with the gold
payload set it should retrieve. Metrics are reported per artifact kind and
overall, with per-sample failure records for error analysis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .catalog import ArtifactKind
from .retrieval import LexicalIndex, query

RECALL_KS = (1, 4, 10)
HIT_RATE_K = 4

GOLD_NOT_INDEXED = "GOLD_NOT_INDEXED"


class EmptySampleSetError(ValueError):
    pass


@dataclass(frozen=True)
class RetrievalSample:
    kind: ArtifactKind
    query: str
    gold: frozenset[str]
    scope: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "query": self.query,
            "scope": self.scope,
            "gold": sorted(self.gold),
        }

    @staticmethod
    def from_dict(data: dict) -> "RetrievalSample":
        return RetrievalSample(
            kind=ArtifactKind(data["kind"]),
            query=data["query"],
            scope=data.get("scope"),
            gold=frozenset(data["gold"]),
        )


def save_samples(samples: Iterable[RetrievalSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_dict(), sort_keys=True) + "\n")


def load_samples(path: str | Path) -> list[RetrievalSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(RetrievalSample.from_dict(json.loads(line)))
    return out


@dataclass(frozen=True)
class MetricBlock:
    recall_at: dict[int, float]
    hit_rate: float
    mrr: float
    count: int

    def to_dict(self) -> dict:
        return {
            **{f"recall@{k}": v for k, v in sorted(self.recall_at.items())},
            f"hit_rate@{HIT_RATE_K}": self.hit_rate,
            "mrr": self.mrr,
            "count": self.count,
        }


@dataclass(frozen=True)
class SampleResult:
    sample: RetrievalSample
    ranking: tuple[str, ...]
    first_gold_rank: int | None
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            **self.sample.to_dict(),
            "top": list(self.ranking[:HIT_RATE_K]),
            "first_gold_rank": self.first_gold_rank,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class RetrievalReport:
    overall: MetricBlock
    per_kind: dict[str, MetricBlock]
    failures: tuple[SampleResult, ...]
    results: tuple[SampleResult, ...] = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.to_dict(),
            "per_kind": {k: v.to_dict() for k, v in sorted(self.per_kind.items())},
            "failures": [f.to_dict() for f in self.failures],
        }


def _metrics(results: Sequence[SampleResult]) -> MetricBlock:
    n = len(results)
    recall_at: dict[int, float] = {}
    for k in RECALL_KS:
        total = 0.0
        for r in results:
            if r.sample.gold:
                hits = len(r.sample.gold & set(r.ranking[:k]))
                total += hits / len(r.sample.gold)
        recall_at[k] = total / n
    hits = sum(
        1 for r in results if r.sample.gold & set(r.ranking[:HIT_RATE_K])
    )
    mrr = sum(
        1.0 / r.first_gold_rank for r in results if r.first_gold_rank is not None
    ) / n
    return MetricBlock(recall_at=recall_at, hit_rate=hits / n, mrr=mrr, count=n)


def evaluate_retrieval(
    index: LexicalIndex, samples: Sequence[RetrievalSample]
) -> RetrievalReport:
    """Score every sample against the full ranking of its candidate set."""
    if not samples:
        raise EmptySampleSetError("no retrieval samples")
    results: list[SampleResult] = []
    for sample in samples:
        ranked = query(
            index, sample.kind, sample.query, k=10**6, scope=sample.scope
        )
        ranking = ranked.payloads
        first = None
        for i, payload in enumerate(ranking):
            if payload in sample.gold:
                first = i + 1
                break
        flags = []
        if not sample.gold & set(ranking):
            flags.append(GOLD_NOT_INDEXED)
        results.append(SampleResult(sample, ranking, first, tuple(flags)))

    per_kind: dict[str, MetricBlock] = {}
    for kind in sorted({r.sample.kind.value for r in results}):
        per_kind[kind] = _metrics([r for r in results if r.sample.kind.value == kind])
    failures = tuple(
        r for r in results if not r.sample.gold & set(r.ranking[:HIT_RATE_K])
    )
    return RetrievalReport(
        overall=_metrics(results),
        per_kind=per_kind,
        failures=failures,
        results=tuple(results),
    )

"""Flow Similarity scoring and corpus-level evaluation reports.

Similarity between two workflows is one minus the tree edit distance
between their tree renderings, normalized by the sum of tree sizes. The
corpus report aggregates three groups: outline-only, full-workflow, and
per-step-type input quality (ranked worst first).
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Sequence

from ..model import Workflow
from .ted import UNIT_COSTS, EditCostModel, tree_edit_distance
from .tree import TreeMode, TreeNode, workflow_to_tree


class EmptyCorpusError(ValueError):
    pass


def similarity_from_trees(
    expected: TreeNode, generated: TreeNode, costs: EditCostModel = UNIT_COSTS
) -> float:
    distance = tree_edit_distance(expected, generated, costs)
    return 1.0 - distance / (expected.size + generated.size)


def flow_similarity(
    expected: Workflow,
    generated: Workflow,
    mode: TreeMode = TreeMode.FULL,
    step_name: str | None = None,
    include_annotations: bool = False,
) -> float:
    """Similarity in [0, 1]; 1 exactly when the tree renderings match."""
    t_e = workflow_to_tree(expected, mode, step_name, include_annotations)
    t_g = workflow_to_tree(generated, mode, step_name, include_annotations)
    return similarity_from_trees(t_e, t_g)


@dataclass(frozen=True)
class Stats:
    mean: float
    median: float
    count: int

    @staticmethod
    def of(values: Sequence[float]) -> "Stats":
        return Stats(statistics.mean(values), statistics.median(values), len(values))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "median": self.median, "count": self.count}


@dataclass(frozen=True)
class PairScore:
    name: str
    full: float
    outline: float

    def to_dict(self) -> dict:
        return {"name": self.name, "full": self.full, "outline": self.outline}


@dataclass(frozen=True)
class StepTypeScore:
    step: str
    mean: float
    count: int

    def to_dict(self) -> dict:
        return {"step": self.step, "mean": self.mean, "count": self.count}


@dataclass(frozen=True)
class EvaluationReport:
    pairs: tuple[PairScore, ...]
    full: Stats
    outline: Stats
    per_step: tuple[StepTypeScore, ...]
    retrieval: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "pairs": [p.to_dict() for p in self.pairs],
            "groups": {
                "full_workflow": self.full.to_dict(),
                "outline_only": self.outline.to_dict(),
                "per_step_inputs": [s.to_dict() for s in self.per_step],
            },
        }
        if self.retrieval is not None:
            out["retrieval"] = self.retrieval
        return out

    def render_text(self) -> str:
        lines = [
            "Flow Similarity",
            f"  full workflow   mean={self.full.mean:.4f} median={self.full.median:.4f} n={self.full.count}",
            f"  outline only    mean={self.outline.mean:.4f} median={self.outline.median:.4f} n={self.outline.count}",
            "  per step type (worst first):",
        ]
        for row in self.per_step:
            lines.append(f"    {row.step:<20} mean={row.mean:.4f} n={row.count}")
        return "\n".join(lines) + "\n"


def evaluate_corpus(
    pairs: Sequence[tuple[Workflow, Workflow]],
    names: Sequence[str] | None = None,
    retrieval: dict | None = None,
) -> EvaluationReport:
    """Score expected/generated workflow pairs across all three groups."""
    if not pairs:
        raise EmptyCorpusError("no workflow pairs to evaluate")
    if names is None:
        names = [f"pair-{i}" for i in range(len(pairs))]

    scored = [
        PairScore(
            name,
            full=flow_similarity(e, g, TreeMode.FULL),
            outline=flow_similarity(e, g, TreeMode.OUTLINE_ONLY),
        )
        for name, (e, g) in zip(names, pairs)
    ]

    per_step_values: dict[str, list[float]] = {}
    for expected, generated in pairs:
        for step_name in sorted({s.name for s in expected.steps}):
            score = flow_similarity(
                expected, generated, TreeMode.SINGLE_STEP, step_name=step_name
            )
            per_step_values.setdefault(step_name, []).append(score)
    per_step = tuple(
        sorted(
            (
                StepTypeScore(step, statistics.mean(vals), len(vals))
                for step, vals in per_step_values.items()
            ),
            key=lambda s: (s.mean, s.step),
        )
    )

    return EvaluationReport(
        pairs=tuple(scored),
        full=Stats.of([p.full for p in scored]),
        outline=Stats.of([p.outline for p in scored]),
        per_step=per_step,
        retrieval=retrieval,
    )

from .report import (
    EmptyCorpusError,
    EvaluationReport,
    evaluate_corpus,
    flow_similarity,
    similarity_from_trees,
)
from .ted import UNIT_COSTS, EditCostModel, tree_edit_distance
from .tree import TreeMode, TreeNode, workflow_to_tree

__all__ = [
    "EmptyCorpusError",
    "EvaluationReport",
    "evaluate_corpus",
    "flow_similarity",
    "similarity_from_trees",
    "UNIT_COSTS",
    "EditCostModel",
    "tree_edit_distance",
    "TreeMode",
    "TreeNode",
    "workflow_to_tree",
]

"""Ordered tree edit distance via the keyroot/forest dynamic program.

Works on :class:`~flowforge.evaluation.tree.TreeNode` values with a
configurable cost model; the default unit costs (insert 1, delete 1,
relabel 1 when labels differ, else 0) make the distance a metric.
"""

from __future__ import annotations

from dataclasses import dataclass

from .tree import TreeNode


@dataclass(frozen=True)
class EditCostModel:
    insert_cost: int = 1
    delete_cost: int = 1
    relabel_cost: int = 1

    def relabel(self, a: str, b: str) -> int:
        return 0 if a == b else self.relabel_cost


UNIT_COSTS = EditCostModel()


class _Annotated:
    """Postorder labels, leftmost-leaf-descendant indices, and keyroots."""

    __slots__ = ("labels", "lmld", "keyroots")

    def __init__(self, root: TreeNode):
        labels: list[str] = []
        lmld: list[int] = []

        def walk(node: TreeNode) -> int:
            first_leaf = -1
            for child in node.children:
                leaf = walk(child)
                if first_leaf == -1:
                    first_leaf = leaf
            index = len(labels)
            labels.append(node.label)
            lmld.append(first_leaf if first_leaf != -1 else index)
            return lmld[index]

        walk(root)
        self.labels = labels
        self.lmld = lmld
        # Keyroots: for each distinct leftmost leaf, the highest postorder
        # node sharing it.
        last: dict[int, int] = {}
        for i, leaf in enumerate(lmld):
            last[leaf] = i
        self.keyroots = sorted(last.values())


def tree_edit_distance(
    t1: TreeNode, t2: TreeNode, costs: EditCostModel = UNIT_COSTS
) -> int:
    """Minimum total cost of node inserts, deletes, and relabels turning
    ``t1`` into ``t2``."""
    a, b = _Annotated(t1), _Annotated(t2)
    la, lb = a.lmld, b.lmld
    n1, n2 = len(a.labels), len(b.labels)
    treedist = [[0] * n2 for _ in range(n1)]
    ins, dele = costs.insert_cost, costs.delete_cost

    for i in a.keyroots:
        for j in b.keyroots:
            # Forest distance over postorder slices [la[i]..i] x [lb[j]..j].
            ioff, joff = la[i] - 1, lb[j] - 1
            m, n = i - ioff + 1, j - joff + 1
            fd = [[0] * n for _ in range(m)]
            for x in range(1, m):
                fd[x][0] = fd[x - 1][0] + dele
            for y in range(1, n):
                fd[0][y] = fd[0][y - 1] + ins
            for x in range(1, m):
                row = fd[x]
                prev = fd[x - 1]
                for y in range(1, n):
                    if la[i] == la[x + ioff] and lb[j] == lb[y + joff]:
                        row[y] = min(
                            prev[y] + dele,
                            row[y - 1] + ins,
                            prev[y - 1]
                            + costs.relabel(a.labels[x + ioff], b.labels[y + joff]),
                        )
                        treedist[x + ioff][y + joff] = row[y]
                    else:
                        p = la[x + ioff] - 1 - ioff
                        q = lb[y + joff] - 1 - joff
                        row[y] = min(
                            prev[y] + dele,
                            row[y - 1] + ins,
                            fd[p][q] + treedist[x + ioff][y + joff],
                        )
    return treedist[n1 - 1][n2 - 1]

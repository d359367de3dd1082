"""Constrained (disjoint-subtrees-to-disjoint-subtrees) edit distance between trees.

The dynamic program follows Zhang's algorithm for unordered labeled trees:
one table for tree-to-tree distances, one for forest-to-forest distances,
each with an extra row and column (index ``-1``) for the empty tree. The
forest case reduces to a minimum cost assignment between child subtrees.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cost_model import delete_cost, relabel_cost
from .merge_tree import MergeTree, PersistencePairing, pair_persistence, unpaired_leaves

INF = float("inf")

# branch codes recorded per cell
RELABEL, INSERT_SIDE, DELETE_SIDE, LEAF = 0, 1, 2, 3
_BRANCH_NAMES = {RELABEL: "relabel", INSERT_SIDE: "insert", DELETE_SIDE: "delete", LEAF: "base"}


def min_cost_matching(cost) -> tuple[float, list[int]]:
    """Minimum weight perfect matching on a square cost matrix.

    Shortest augmenting path with row and column potentials, O(n^3).
    Returns ``(total, assignment)`` with ``assignment[row] = column``. Rows
    are inserted in index order and the first strictly better column wins, so
    equal-cost optima resolve towards lower indices.
    """
    cost = [list(map(float, row)) for row in cost]
    n = len(cost)
    if any(len(row) != n for row in cost):
        raise ValueError("cost matrix must be square")
    if n == 0:
        return 0.0, []
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    match_col = [0] * (n + 1)  # match_col[col] = row (1-based), 0 = free
    way = [0] * (n + 1)
    for row in range(1, n + 1):
        match_col[0] = row
        col0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[col0] = True
            r = match_col[col0]
            delta, col1 = INF, 0
            crow = cost[r - 1]
            for col in range(1, n + 1):
                if used[col]:
                    continue
                cur = crow[col - 1] - u[r] - v[col]
                if cur < minv[col]:
                    minv[col] = cur
                    way[col] = col0
                if minv[col] < delta:
                    delta, col1 = minv[col], col
            for col in range(n + 1):
                if used[col]:
                    u[match_col[col]] += delta
                    v[col] -= delta
                else:
                    minv[col] -= delta
            col0 = col1
            if match_col[col0] == 0:
                break
        while col0:
            col1 = way[col0]
            match_col[col0] = match_col[col1]
            col0 = col1
    assignment = [0] * n
    for col in range(1, n + 1):
        assignment[match_col[col] - 1] = col - 1
    return sum(cost[r][assignment[r]] for r in range(n)), assignment


def padded_matching_matrix(w, dl, dr) -> list[list[float]]:
    """Square matrix for the restricted forest mapping.

    Left side: the ``ni`` left trees followed by ``nj`` empty slots; right
    side: the ``nj`` right trees followed by ``ni`` empty slots. A tree
    facing an empty slot pays its distance to the empty tree; two empty
    slots cost nothing.
    """
    ni, nj = len(dl), len(dr)
    size = ni + nj
    m = [[0.0] * size for _ in range(size)]
    for s in range(ni):
        for t in range(nj):
            m[s][t] = w[s][t]
        for k in range(ni):
            m[s][nj + k] = dl[s]
    for k in range(nj):
        for t in range(nj):
            m[ni + k][t] = dr[t]
    return m


def restricted_forest_cost(w, dl, dr) -> float:
    """Cheapest one-to-one mapping of left trees onto right trees.

    Unmatched trees are deleted (``dl``) or inserted (``dr``). Up to two
    trees per side are enumerated directly; larger forests go through
    :func:`min_cost_matching`.
    """
    ni, nj = len(dl), len(dr)
    base = sum(dl) + sum(dr)
    if ni == 0 or nj == 0:
        return base
    if ni <= 2 and nj <= 2:
        best = base
        for s in range(ni):
            ws = w[s]
            for t in range(nj):
                c = base - dl[s] - dr[t] + ws[t]
                if c < best:
                    best = c
        if ni == 2 and nj == 2:
            c = min(w[0][0] + w[1][1], w[0][1] + w[1][0])
            if c < best:
                best = c
        return best
    return min_cost_matching(padded_matching_matrix(w, dl, dr))[0]


@dataclass
class EditTree:
    """Flat view of a labeled tree used by the dynamic programs.

    Every node carries a persistence point ``(b[i], d[i])``; ``unpaired[i]``
    is the designated unpaired leaf of ``T[i]`` and ``upath[i]`` the child of
    ``i`` on the path to it (``-1`` for leaves).
    """

    children: list[tuple[int, ...]]
    parent: list[int]
    b: list[float]
    d: list[float]
    root: int
    unpaired: list[int]
    upath: list[int]
    value: list[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.children)

    @property
    def dele(self) -> list[float]:
        return [abs(d - b) / 2.0 for b, d in zip(self.b, self.d)]

    def postorder(self, root: int | None = None) -> list[int]:
        root = self.root if root is None else root
        out, stack = [], [(root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                out.append(node)
            else:
                stack.append((node, True))
                stack.extend((c, False) for c in reversed(self.children[node]))
        return out

    @classmethod
    def from_merge_tree(cls, t: MergeTree, p: PersistencePairing | None = None) -> "EditTree":
        p = pair_persistence(t) if p is None else p
        unpaired = unpaired_leaves(t).tolist()
        upath = [-1] * t.n
        for i, ch in enumerate(t.children):
            for c in ch:
                if unpaired[c] == unpaired[i]:
                    upath[i] = c
        return cls(
            list(t.children), t.parent.tolist(), p.birth.tolist(), p.death.tolist(),
            int(t.root), unpaired, upath, t.value.tolist(),
        )

    @classmethod
    def from_structure(cls, parents: Sequence[int], points, unpaired: Sequence[int] | None = None) -> "EditTree":
        """Arbitrary rooted tree with explicit points.

        Without ``unpaired`` each internal node inherits the unpaired leaf of
        its first child.
        """
        n = len(parents)
        children: list[list[int]] = [[] for _ in range(n)]
        for i, par in enumerate(parents):
            if par != -1:
                children[par].append(i)
        root = list(parents).index(-1)
        tmp = cls([tuple(c) for c in children], list(parents), [float(p[0]) for p in points],
                  [float(p[1]) for p in points], root, [0] * n, [-1] * n)
        if unpaired is None:
            unpaired = [0] * n
            for i in tmp.postorder():
                unpaired[i] = unpaired[children[i][0]] if children[i] else i
        tmp.unpaired = list(unpaired)
        for i in range(n):
            for c in children[i]:
                if tmp.unpaired[c] == tmp.unpaired[i]:
                    tmp.upath[i] = c
        return tmp


def as_edit_tree(t, p: PersistencePairing | None = None) -> EditTree:
    if isinstance(t, EditTree):
        return t
    if isinstance(t, MergeTree):
        return EditTree.from_merge_tree(t, p)
    # SegmentedTree and friends
    return EditTree.from_merge_tree(t.tree, t.pairing)


@dataclass
class DcTables:
    """Tree and forest distance tables; index ``-1`` is the empty tree."""

    tree: np.ndarray
    forest: np.ndarray
    tree_branch: np.ndarray
    forest_branch: np.ndarray
    e1: EditTree
    e2: EditTree

    def dc_tree(self, i: int, j: int) -> float:
        return float(self.tree[i, j])

    def dc_forest(self, i: int, j: int) -> float:
        return float(self.forest[i, j])


def _empty_tables(e: EditTree, nodes: list[int], TD_col: list[float], FD_col: list[float]) -> None:
    dele = e.dele
    for i in nodes:
        f = 0.0
        for c in e.children[i]:
            f += TD_col[c]
        FD_col[i] = f
        TD_col[i] = f + dele[i]


class _DcState:
    """Mutable list-of-lists tables shared by the D_c and D' fills."""

    def __init__(self, e1: EditTree, e2: EditTree):
        n1, n2 = e1.n, e2.n
        self.e1, self.e2 = e1, e2
        self.TD = [[0.0] * (n2 + 1) for _ in range(n1 + 1)]
        self.FD = [[0.0] * (n2 + 1) for _ in range(n1 + 1)]
        self.TB = [[LEAF] * (n2 + 1) for _ in range(n1 + 1)]
        self.FB = [[LEAF] * (n2 + 1) for _ in range(n1 + 1)]
        self.del1, self.del2 = e1.dele, e2.dele

    def fill_empty(self, nodes1: list[int], nodes2: list[int]) -> None:
        TD, FD = self.TD, self.FD
        col_t = [row[-1] for row in TD]
        col_f = [row[-1] for row in FD]
        _empty_tables(self.e1, nodes1, col_t, col_f)
        for i in nodes1:
            TD[i][-1] = col_t[i]
            FD[i][-1] = col_f[i]
        _empty_tables(self.e2, nodes2, TD[-1], FD[-1])

    def cell(self, i: int, j: int) -> None:
        """Fill ``(i, j)`` of both tables; children entries must be final."""
        e1, e2 = self.e1, self.e2
        TD, FD = self.TD, self.FD
        ci, cj = e1.children[i], e2.children[j]
        TDi, FDi = TD[i], FD[i]
        TDe, FDe = TD[-1], FD[-1]
        if not ci and not cj:
            f, fb = 0.0, LEAF
        elif not ci:
            f, fb = FDe[j], INSERT_SIDE
        elif not cj:
            f, fb = FDi[-1], DELETE_SIDE
        else:
            fa = FDe[j] + min([FDi[t] - FDe[t] for t in cj])
            fdel = FDi[-1] + min([FD[s][j] - FD[s][-1] for s in ci])
            w = [[TD[s][t] for t in cj] for s in ci]
            fc = restricted_forest_cost(w, [TD[s][-1] for s in ci], [TDe[t] for t in cj])
            f, fb = fc, RELABEL
            if fa < f:
                f, fb = fa, INSERT_SIDE
            if fdel < f:
                f, fb = fdel, DELETE_SIDE
        FDi[j] = f
        self.FB[i][j] = fb
        b1, d1, b2, d2 = e1.b[i], e1.d[i], e2.b[j], e2.d[j]
        rel = max(abs(b2 - b1), abs(d2 - d1))
        diag = (abs(d1 - b1) + abs(d2 - b2)) / 2.0
        t, tb = f + (rel if rel < diag else diag), RELABEL
        if cj:
            ta = TDe[j] + min([TDi[c] - TDe[c] for c in cj])
            if ta < t:
                t, tb = ta, INSERT_SIDE
        if ci:
            tdel = TDi[-1] + min([TD[s][j] - TD[s][-1] for s in ci])
            if tdel < t:
                t, tb = tdel, DELETE_SIDE
        TDi[j] = t
        self.TB[i][j] = tb

    def freeze(self) -> DcTables:
        return DcTables(
            np.array(self.TD), np.array(self.FD), np.array(self.TB, dtype=np.int8),
            np.array(self.FB, dtype=np.int8), self.e1, self.e2,
        )


def dc_tables(t1, t2, p1: PersistencePairing | None = None, p2: PersistencePairing | None = None,
              root1: int | None = None, root2: int | None = None) -> DcTables:
    """Fill the constrained distance tables for ``T1[root1]`` x ``T2[root2]``.

    Node pairs are visited with both trees in postorder, so every child entry
    exists before its parent entry is computed.
    """
    e1, e2 = as_edit_tree(t1, p1), as_edit_tree(t2, p2)
    nodes1 = e1.postorder(root1)
    nodes2 = e2.postorder(root2)
    st = _DcState(e1, e2)
    st.fill_empty(nodes1, nodes2)
    for i in nodes1:
        for j in nodes2:
            st.cell(i, j)
    return st.freeze()


def dc_empty(t, root: int, forest: bool = False, p: PersistencePairing | None = None) -> float:
    """Distance of ``T[root]`` (or of its forest ``F[root]``) to the empty tree."""
    e = as_edit_tree(t, p)
    dele = e.dele
    total = sum(dele[x] for x in e.postorder(root))
    return total - dele[root] if forest else total


def orientation_key(e: EditTree, root: int | None = None) -> tuple:
    """Total order on (tree, subtree root) used to pick which side goes first.

    Running the program in one canonical orientation makes the result
    bitwise symmetric; floating point sums would otherwise differ in the
    last ulp between ``d(x, y)`` and ``d(y, x)``.
    """
    return (
        e.n, tuple(e.b), tuple(e.d), tuple(map(tuple, e.children)), tuple(e.unpaired),
        e.root if root is None else root,
    )


def transpose_tables(tables: DcTables) -> DcTables:
    swap = np.array([RELABEL, DELETE_SIDE, INSERT_SIDE, LEAF], dtype=np.int8)
    return DcTables(
        tables.tree.T.copy(), tables.forest.T.copy(), swap[tables.tree_branch.T], swap[tables.forest_branch.T],
        tables.e2, tables.e1,
    )


def mted(t1, t2, p1: PersistencePairing | None = None, p2: PersistencePairing | None = None) -> float:
    """Global edit distance between two merge trees (or ``None`` for the empty tree)."""
    if t1 is None and t2 is None:
        return 0.0
    if t1 is None or t2 is None:
        t, p = (t2, p2) if t1 is None else (t1, p1)
        e = as_edit_tree(t, p)
        return dc_empty(e, e.root)
    e1, e2 = as_edit_tree(t1, p1), as_edit_tree(t2, p2)
    if orientation_key(e2) < orientation_key(e1):
        e1, e2 = e2, e1
    tables = dc_tables(e1, e2)
    return tables.dc_tree(e1.root, e2.root)


def _forest_assignment(tables: DcTables, i: int, j: int) -> list[list[int]]:
    e1, e2 = tables.e1, tables.e2
    ci, cj = list(e1.children[i]), list(e2.children[j])
    w = [[tables.tree[s, t] for t in cj] for s in ci]
    m = padded_matching_matrix(w, [tables.tree[s, -1] for s in ci], [tables.tree[-1, t] for t in cj])
    _, assign = min_cost_matching(m)
    return [[ci[s], cj[t]] for s, t in enumerate(assign[: len(ci)]) if t < len(cj)]


def trace_to_json(tables: DcTables) -> dict:
    """Chosen branch (and forest matching) for every computed cell."""
    cells = []
    e1, e2 = tables.e1, tables.e2
    for i in e1.postorder():
        for j in e2.postorder():
            entry = {
                "i": i, "j": j,
                "tree": float(tables.tree[i, j]), "tree_branch": _BRANCH_NAMES[int(tables.tree_branch[i, j])],
                "forest": float(tables.forest[i, j]), "forest_branch": _BRANCH_NAMES[int(tables.forest_branch[i, j])],
            }
            if tables.forest_branch[i, j] == RELABEL:
                entry["matching"] = _forest_assignment(tables, i, j)
            cells.append(entry)
    return {"root1": e1.root, "root2": e2.root, "mted": float(tables.tree[e1.root, e2.root]), "cells": cells}


def dump_trace(tables: DcTables, path) -> None:
    with open(path, "w") as fh:
        json.dump(trace_to_json(tables), fh, indent=1, sort_keys=True)
        fh.write("\n")


__all__ = [
    "DcTables", "EditTree", "as_edit_tree", "dc_empty", "dc_tables", "dump_trace", "min_cost_matching",
    "mted", "orientation_key", "padded_matching_matrix", "relabel_cost", "delete_cost", "restricted_forest_cost", "trace_to_json", "transpose_tables",
]

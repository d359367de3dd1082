"""Edit costs on persistence points (the L-infinity model) and their truncated forms.

A node is labeled by the point ``(b, d)`` of its persistence pair. Relabeling
costs the L-infinity distance between two points, capped by the cost of
sending both to the diagonal; inserting or deleting costs half the
persistence, which is the L-infinity distance of the point to the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .merge_tree import MergeTree, PersistencePairing


class PersistencePoint(NamedTuple):
    b: float
    d: float

    @property
    def pers(self) -> float:
        return self.d - self.b


def relabel_cost(p, q) -> float:
    (bp, dp), (bq, dq) = p, q
    return min(max(abs(bq - bp), abs(dq - dp)), (abs(dp - bp) + abs(dq - bq)) / 2.0)


def delete_cost(p) -> float:
    return abs(p[1] - p[0]) / 2.0


insert_cost = delete_cost


@dataclass(frozen=True)
class TruncatedContext:
    """Unpaired leaf of a subtree together with the value of its dummy root.

    For a proper subtree the dummy sits exactly at the parent's value; for
    the whole tree it sits at the root value.
    """

    root: int
    unpaired: int
    unpaired_value: float
    dummy_value: float

    @property
    def tp(self) -> float:
        return abs(self.unpaired_value - self.dummy_value)

    @property
    def point(self) -> PersistencePoint:
        lo, hi = sorted((self.unpaired_value, self.dummy_value))
        return PersistencePoint(lo, hi)


def truncated_context(tree: MergeTree, root: int, unpaired: int) -> TruncatedContext:
    parent = int(tree.parent[root])
    dummy = float(tree.value[parent]) if parent != -1 else float(tree.value[root])
    return TruncatedContext(root, unpaired, float(tree.value[unpaired]), dummy)


def truncated_persistence(tree: MergeTree, pairing: PersistencePairing | None, ctx: TruncatedContext) -> float:
    return abs(float(tree.value[ctx.unpaired]) - ctx.dummy_value)


def truncated_cost(
    p: Optional[PersistencePoint],
    q: Optional[PersistencePoint],
    p_unpaired: bool = False,
    q_unpaired: bool = False,
) -> float:
    """Cost of ``p -> q`` where unpaired nodes and ``None`` (the empty label) are free.

    A paired node facing a free one pays its own insert/delete cost.
    """
    p_free = p is None or p_unpaired
    q_free = q is None or q_unpaired
    if p_free and q_free:
        return 0.0
    if q_free:
        return delete_cost(p)
    if p_free:
        return insert_cost(q)
    return relabel_cost(p, q)


def gamma_cap(ctx_i: Optional[TruncatedContext], ctx_j: Optional[TruncatedContext]) -> float:
    """Relabel cost between the truncated points of two unpaired leaves.

    With a single context present the truncated point is sent to the diagonal
    instead, i.e. half its truncated persistence.
    """
    if ctx_i is not None and ctx_j is not None:
        return relabel_cost(ctx_i.point, ctx_j.point)
    if ctx_i is not None:
        return ctx_i.tp / 2.0
    if ctx_j is not None:
        return ctx_j.tp / 2.0
    return 0.0

"""Local edit distance between subtrees, for all subtree pairs in one pass.

For subtrees ``T1[i]`` and ``T2[j]`` the local distance is ``D'(i, j) + Gamma``:

* ``D'`` is the constrained edit distance in which the two unpaired leaves
  (the leaves whose persistence partners lie above the subtree roots) must be
  mapped onto each other at no cost. Every other node keeps the point of its
  persistence pair in the full tree, so its contribution is the usual edit
  cost.
* ``Gamma`` relabels the two truncated points ``(f(unpaired), f(dummy))``,
  i.e. the unpaired features cut off at the subtree's parent value.

Because the unpaired leaf of ``T[i]`` depends only on ``i`` (it is the
oldest leaf of the subtree), a single pair of tables answers every subtree
pair. ``D'`` reuses the plain constrained tables for children off the
unpaired paths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cost_model import relabel_cost
from .edit_distance import (
    INF, DcTables, EditTree, _DcState, as_edit_tree, orientation_key, restricted_forest_cost, transpose_tables,
)
from .merge_tree import MergeTree, SegmentedTree, SubtreeRef
from .refinement import RefinementConfig, order_subtrees, resolve_config, retained_mask

COST_MODEL = "wasserstein_linf"
PRUNED = "PRUNED"


class _PrimeState:
    """``D'`` tables on top of a constrained-distance state."""

    def __init__(self, dc: _DcState):
        self.dc = dc
        n1, n2 = dc.e1.n, dc.e2.n
        self.TP = [[0.0] * (n2 + 1) for _ in range(n1 + 1)]
        self.FP = [[0.0] * (n2 + 1) for _ in range(n1 + 1)]

    def fill_empty(self, nodes1: list[int], nodes2: list[int]) -> None:
        TD, TP, FP = self.dc.TD, self.TP, self.FP
        e1, e2 = self.dc.e1, self.dc.e2
        del1, del2 = self.dc.del1, self.dc.del2
        for i in nodes1:
            ci = e1.children[i]
            if not ci:
                continue  # the unpaired leaf itself is free
            u = e1.upath[i]
            f = TP[u][-1]
            for s in ci:
                if s != u:
                    f += TD[s][-1]
            FP[i][-1] = f
            TP[i][-1] = f + del1[i]
        TPe, FPe, TDe = TP[-1], FP[-1], TD[-1]
        for j in nodes2:
            cj = e2.children[j]
            if not cj:
                continue
            u = e2.upath[j]
            f = TPe[u]
            for t in cj:
                if t != u:
                    f += TDe[t]
            FPe[j] = f
            TPe[j] = f + del2[j]

    def cell(self, i: int, j: int) -> None:
        dc = self.dc
        e1, e2 = dc.e1, dc.e2
        TD, TP, FP = dc.TD, self.TP, self.FP
        ci, cj = e1.children[i], e2.children[j]
        TPi, FPi, TPe, FPe = TP[i], FP[i], TP[-1], FP[-1]
        if not ci and not cj:
            TPi[j] = 0.0
            FPi[j] = 0.0
            return
        if not ci:
            # the leaf i is the unpaired leaf and must land on j's unpaired leaf
            uj = e2.upath[j]
            FPi[j] = INF
            TPi[j] = TPe[j] + TPi[uj] - TPe[uj]
            return
        if not cj:
            ui = e1.upath[i]
            FPi[j] = INF
            TPi[j] = TP[i][-1] + TP[ui][j] - TP[ui][-1]
            return
        ui, uj = e1.upath[i], e2.upath[j]
        left = [s for s in ci if s != ui]
        right = [t for t in cj if t != uj]
        w = [[TD[s][t] for t in right] for s in left]
        f = TP[ui][uj] + restricted_forest_cost(w, [TD[s][-1] for s in left], [TD[-1][t] for t in right])
        fa = FPe[j] + FPi[uj] - FPe[uj]
        if fa < f:
            f = fa
        fb = FPi[-1] + FP[ui][j] - FP[ui][-1]
        if fb < f:
            f = fb
        FPi[j] = f
        b1, d1, b2, d2 = e1.b[i], e1.d[i], e2.b[j], e2.d[j]
        rel = max(abs(b2 - b1), abs(d2 - d1))
        diag = (abs(d1 - b1) + abs(d2 - b2)) / 2.0
        t = f + (rel if rel < diag else diag)
        ta = TPe[j] + TPi[uj] - TPe[uj]
        if ta < t:
            t = ta
        tb = TPi[-1] + TP[ui][j] - TP[ui][-1]
        if tb < t:
            t = tb
        TPi[j] = t


def _truncated_points(e: EditTree, dummy_values: Sequence[float]) -> list[tuple[float, float]]:
    pts = []
    if not e.value:
        return [(0.0, 0.0)] * e.n
    for x in range(e.n):
        a, b = e.value[e.unpaired[x]], dummy_values[x]
        pts.append((min(a, b), max(a, b)))
    return pts


def _dummy_values(e: EditTree) -> list[float]:
    if not e.value:
        return []
    return [e.value[e.parent[x]] if e.parent[x] != -1 else e.value[x] for x in range(e.n)]


@dataclass
class LocalTables:
    """Constrained and forced-unpaired tables for two trees.

    ``dprime_tree[i, j]`` and ``dprime_forest[i, j]`` follow the layout of
    :class:`DcTables` (index ``-1`` is the empty tree). ``tp1``/``tp2`` hold
    the truncated persistence of every subtree's unpaired leaf.
    """

    dc: DcTables
    dprime_tree: np.ndarray
    dprime_forest: np.ndarray
    trunc1: list[tuple[float, float]]
    trunc2: list[tuple[float, float]]

    @property
    def tp1(self) -> np.ndarray:
        return np.array([d - b for b, d in self.trunc1])

    @property
    def tp2(self) -> np.ndarray:
        return np.array([d - b for b, d in self.trunc2])

    def gamma(self, i: int, j: int) -> float:
        return relabel_cost(self.trunc1[i], self.trunc2[j])

    def lmted(self, i: int, j: int) -> float:
        return float(self.dprime_tree[i, j]) + self.gamma(i, j)

    def transposed(self) -> "LocalTables":
        return LocalTables(
            transpose_tables(self.dc), self.dprime_tree.T.copy(), self.dprime_forest.T.copy(),
            self.trunc2, self.trunc1,
        )


def _edit_tree(t) -> EditTree:
    return as_edit_tree(t)


def local_tables(t1, t2, root1: int | None = None, root2: int | None = None) -> LocalTables:
    """Fill both table pairs over ``T1[root1]`` x ``T2[root2]`` (whole trees by default).

    The program always runs in the canonical orientation of the two inputs
    and is transposed back when needed, so swapping the arguments gives
    bitwise transposed tables.
    """
    e1, e2 = _edit_tree(t1), _edit_tree(t2)
    if orientation_key(e2, root2) < orientation_key(e1, root1):
        return _fill_local(e2, e1, root2, root1).transposed()
    return _fill_local(e1, e2, root1, root2)


def _fill_local(e1: EditTree, e2: EditTree, root1: int | None, root2: int | None) -> LocalTables:
    nodes1, nodes2 = e1.postorder(root1), e2.postorder(root2)
    dc = _DcState(e1, e2)
    dc.fill_empty(nodes1, nodes2)
    dp = _PrimeState(dc)
    dp.fill_empty(nodes1, nodes2)
    for i in nodes1:
        for j in nodes2:
            dc.cell(i, j)
            dp.cell(i, j)
    return LocalTables(
        dc.freeze(), np.array(dp.TP), np.array(dp.FP),
        _truncated_points(e1, _dummy_values(e1)), _truncated_points(e2, _dummy_values(e2)),
    )


def dprime_empty(t, root: int, forest: bool = False) -> float:
    """``D'`` of ``T[root]`` (or its forest) against the empty tree."""
    e = _edit_tree(t)
    nodes = e.postorder(root)
    dc = _DcState(e, e)
    dc.fill_empty(nodes, [])
    dp = _PrimeState(dc)
    dp.fill_empty(nodes, [])
    return float(dp.FP[root][-1] if forest else dp.TP[root][-1])


def dprime_tree(i: int, j: int, tables: LocalTables) -> float:
    return float(tables.dprime_tree[i, j])


def dprime_forest(i: int, j: int, tables: LocalTables) -> float:
    return float(tables.dprime_forest[i, j])


def lmted_pair(t1, i: int, t2, j: int, tables: LocalTables | None = None) -> float:
    """Local distance between ``T1[i]`` and ``T2[j]``.

    Without ``tables`` the dynamic program is run from scratch on the two
    subtrees only.
    """
    if tables is None:
        tables = local_tables(t1, t2, i, j)
    return tables.lmted(i, j)


@dataclass
class DistanceMatrix:
    """All-pairs local distances.

    Rows follow the ordered subtrees of the second tree, columns those of
    the first. Pruned entries are NaN in ``values`` and ``False`` in
    ``retained``.
    """

    rows: list[SubtreeRef]
    cols: list[SubtreeRef]
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def retained(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def __post_init__(self):
        self._row_index = {r.root: k for k, r in enumerate(self.rows)}
        self._col_index = {c.root: k for k, c in enumerate(self.cols)}

    def get(self, root1: int, root2: int) -> float | None:
        """Entry for ``(T1[root1], T2[root2])``; ``None`` when pruned."""
        v = self.values[self._row_index[root2], self._col_index[root1]]
        return None if math.isnan(v) else float(v)

    def retained_pairs(self) -> list[tuple[int, int]]:
        rr, cc = np.nonzero(self.retained)
        return [(self.cols[c].root, self.rows[r].root) for r, c in zip(rr.tolist(), cc.tolist())]

    # export

    def to_csv(self, path) -> None:
        """Write the CSV table and a ``.json`` metadata sidecar."""
        path = Path(path)
        lines = ["," + ",".join(str(c.root) for c in self.cols)]
        for r, ref in enumerate(self.rows):
            cells = [PRUNED if math.isnan(v) else repr(float(v)) for v in self.values[r]]
            lines.append(f"{ref.root}," + ",".join(cells))
        path.write_text("\n".join(lines) + "\n")
        sidecar = {
            "meta": self.meta,
            "rows": [r.to_json() for r in self.rows],
            "cols": [c.to_json() for c in self.cols],
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path) -> "DistanceMatrix":
        path = Path(path)
        lines = path.read_text().splitlines()
        col_roots = [int(x) for x in lines[0].split(",")[1:]]
        row_roots, vals = [], []
        for line in lines[1:]:
            parts = line.split(",")
            row_roots.append(int(parts[0]))
            vals.append([math.nan if p == PRUNED else float(p) for p in parts[1:]])
        side = path.with_suffix(".json")
        if side.exists():
            doc = json.loads(side.read_text())
            rows = [SubtreeRef.from_json(d) for d in doc["rows"]]
            cols = [SubtreeRef.from_json(d) for d in doc["cols"]]
            meta = doc["meta"]
            if [r.root for r in rows] != row_roots or [c.root for c in cols] != col_roots:
                raise ValueError(f"{side}: subtree ids disagree with {path}")
        else:
            rows = [_bare_ref("T2", r) for r in row_roots]
            cols = [_bare_ref("T1", c) for c in col_roots]
            meta = {}
        values = np.array(vals, dtype=np.float64).reshape(len(row_roots), len(col_roots))
        return cls(rows, cols, values, meta)

    def to_ppm(self, path, vmin: float = 0.0, vmax: float = 0.1, cell: int = 1) -> None:
        """Binary PPM heatmap, blue (vmin) to red (vmax); pruned cells are white."""
        if vmax <= vmin:
            raise ValueError("heatmap range must satisfy vmin < vmax")
        h, w = self.values.shape
        img = np.full((h, w, 3), 255, dtype=np.uint8)
        mask = self.retained
        x = np.clip((np.nan_to_num(self.values) - vmin) / (vmax - vmin), 0.0, 1.0)
        img[..., 0] = np.where(mask, np.round(255 * x), 255).astype(np.uint8)
        img[..., 1] = np.where(mask, 0, 255).astype(np.uint8)
        img[..., 2] = np.where(mask, np.round(255 * (1.0 - x)), 255).astype(np.uint8)
        if cell > 1:
            img = img.repeat(cell, axis=0).repeat(cell, axis=1)
        with open(path, "wb") as fh:
            fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
            fh.write(img.tobytes())


def _bare_ref(tree_id: str, root: int) -> SubtreeRef:
    return SubtreeRef(tree_id, root, 0, 0, 0.0, -1, -1, 0.0, 0, 0)


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    header = data.split(b"\n", 3)
    if header[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = map(int, header[1].split())
    return np.frombuffer(header[3], dtype=np.uint8).reshape(h, w, 3)


def _as_segmented(t, label: str) -> SegmentedTree:
    if isinstance(t, SegmentedTree):
        return t
    if isinstance(t, MergeTree):
        return SegmentedTree(t, label=label)
    raise TypeError(f"expected MergeTree or SegmentedTree, got {type(t).__name__}")


def lmted_all_pairs(t1, t2, config: RefinementConfig | None = None, meta: dict | None = None,
                    tables: LocalTables | None = None) -> DistanceMatrix:
    """Local distances between every retained subtree pair of ``t1`` and ``t2``.

    Both table pairs are filled once over the whole trees; pruning only
    decides which entries are reported.
    """
    config = RefinementConfig.off() if config is None else config
    st1, st2 = _as_segmented(t1, "T1"), _as_segmented(t2, "T2")
    cols = order_subtrees(st1.subtree_refs())
    rows = order_subtrees(st2.subtree_refs())
    resolved = resolve_config(cols, rows, config)
    mask = retained_mask(cols, rows, resolved)
    if tables is None:
        tables = local_tables(st1, st2)
    values = np.full(mask.shape, np.nan)
    for r, rref in enumerate(rows):
        for c, cref in enumerate(cols):
            if mask[r, c]:
                values[r, c] = tables.lmted(cref.root, rref.root)
    info = {"cost_model": COST_MODEL, "refinement": resolved.to_json()}
    for k, st in (("tree1", st1), ("tree2", st2)):
        info[k] = {"variant": st.tree.variant, "n": st.tree.n, **st.tree.meta}
    info.update(meta or {})
    return DistanceMatrix(rows, cols, values, info)

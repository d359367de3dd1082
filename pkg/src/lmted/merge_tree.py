"""Join and split trees of gridded scalar fields.

Trees are built with a union-find sweep over the vertices in the tie-broken
total order (descending for split trees, ascending for join trees). A node is
created whenever the sweep starts a component (an extremum, i.e. a leaf) or
joins several components (a saddle); the last vertex becomes the root, which
always has exactly one child. A vertex merging ``k > 2`` components yields a
chain of ``k - 1`` binary saddles at the same vertex.

Every grid vertex is assigned to the arc it was swept into. An arc is named
after the node at its upper end in sweep terms, i.e. the node from which the
arc descends towards the node's parent.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .field_io import ScalarGrid, neighbor_lists, total_order

VARIANTS = ("join", "split")
CONNECTIVITY = "freudenthal"


@dataclass
class MergeTree:
    """Rooted tree of critical points; node ids are ``0 .. n-1``.

    ``vertex[i]`` is the grid vertex of node ``i`` (``-1`` for synthetic nodes
    such as dummy roots), ``value[i]`` its function value.
    """

    variant: str
    vertex: np.ndarray
    value: np.ndarray
    parent: np.ndarray
    children: list[tuple[int, ...]]
    root: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        self.vertex = np.asarray(self.vertex, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=np.float64)
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.children = [tuple(int(c) for c in ch) for ch in self.children]

    def __len__(self) -> int:
        return len(self.children)

    @property
    def n(self) -> int:
        return len(self.children)

    def kind(self, i: int) -> str:
        if i == self.root:
            return "root"
        return "leaf" if not self.children[i] else "saddle"

    @property
    def leaves(self) -> list[int]:
        return [i for i in range(self.n) if not self.children[i]]

    def elder_key(self, i: int) -> tuple[float, int]:
        """Sweep-order key; the smaller key was swept first (is older)."""
        v = float(self.value[i])
        return (-v, int(self.vertex[i])) if self.variant == "split" else (v, int(self.vertex[i]))

    def postorder(self, root: int | None = None) -> list[int]:
        root = self.root if root is None else root
        out, stack = [], [(root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                out.append(node)
                continue
            stack.append((node, True))
            for c in reversed(self.children[node]):
                stack.append((c, False))
        return out

    def subtree_nodes(self, root: int) -> list[int]:
        return self.postorder(root)

    def depth(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for i in reversed(self.postorder()):
            if i != self.root:
                d[i] = d[self.parent[i]] + 1
        return d

    def is_ancestor(self, a: int, b: int) -> bool:
        """True if ``a`` is an ancestor of ``b`` or ``a == b``."""
        while b != -1:
            if b == a:
                return True
            b = int(self.parent[b])
        return False

    def validate(self) -> None:
        """Check link consistency, acyclicity and value monotonicity."""
        roots = [i for i in range(self.n) if self.parent[i] == -1]
        if roots != [self.root]:
            raise ValueError(f"expected exactly one root {self.root}, found {roots}")
        for i, ch in enumerate(self.children):
            for c in ch:
                if self.parent[c] != i:
                    raise ValueError(f"node {c} listed as child of {i} but has parent {self.parent[c]}")
        if len(self.postorder()) != self.n:
            raise ValueError("tree is not connected or contains a cycle")
        sign = 1.0 if self.variant == "split" else -1.0
        for i in range(self.n):
            p = self.parent[i]
            if p != -1 and sign * (self.value[i] - self.value[p]) < 0:
                raise ValueError(f"node {i} violates {self.variant} tree ordering w.r.t. parent {p}")

    @classmethod
    def from_parents(cls, parents, values, variant: str = "split", vertices=None) -> "MergeTree":
        """Build from a parent array (``-1`` marks the root).

        Children keep increasing id order. Without explicit ``vertices`` the
        node id doubles as the vertex id for tie breaking.
        """
        parents = [int(p) for p in parents]
        n = len(parents)
        children: list[list[int]] = [[] for _ in range(n)]
        for i, p in enumerate(parents):
            if p != -1:
                children[p].append(i)
        roots = [i for i, p in enumerate(parents) if p == -1]
        if len(roots) != 1:
            raise ValueError(f"expected exactly one root, found {len(roots)}")
        vertices = list(range(n)) if vertices is None else vertices
        t = cls(variant, vertices, values, parents, children, roots[0])
        t.validate()
        return t


@dataclass
class Segmentation:
    """Arc assignment of every grid vertex.

    ``arc[v]`` is the node id owning vertex ``v``; ``counts[i]`` is the
    number of vertices on the arc of node ``i``.
    """

    dims: tuple[int, ...]
    arc: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_arcs(cls, dims, arc, n_nodes: int) -> "Segmentation":
        arc = np.asarray(arc, dtype=np.int64)
        return cls(tuple(dims), arc, np.bincount(arc, minlength=n_nodes).astype(np.int64))


@dataclass
class PersistencePairing:
    """Elder-rule pairing; every node carries the point of its pair."""

    partner: np.ndarray
    birth: np.ndarray
    death: np.ndarray

    @property
    def pers(self) -> np.ndarray:
        return self.death - self.birth

    def point(self, i: int) -> tuple[float, float]:
        return float(self.birth[i]), float(self.death[i])


def build_merge_tree(g: ScalarGrid, variant: str = "split") -> tuple[MergeTree, Segmentation]:
    """Union-find sweep over ``g`` producing a binary merge tree and its arcs."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    order = total_order(g, "descending" if variant == "split" else "ascending").tolist()
    nbrs = neighbor_lists(g.dims)
    values = g.values
    n_vert = g.size

    uf = list(range(n_vert))
    seen = [False] * n_vert
    top: dict[int, int] = {}  # component representative -> lowest node created so far

    def find(x: int) -> int:
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        return x

    node_vertex: list[int] = []
    node_parent: list[int] = []
    node_children: list[list[int]] = []
    arc = np.empty(n_vert, dtype=np.int64)

    def new_node(v: int, kids: list[int]) -> int:
        nid = len(node_vertex)
        node_vertex.append(v)
        node_parent.append(-1)
        node_children.append(list(kids))
        for k in kids:
            node_parent[k] = nid
        return nid

    last = order[-1]
    for v in order:
        comps: list[int] = []
        for u in nbrs[v]:
            if seen[u]:
                r = find(u)
                if r not in comps:
                    comps.append(r)
        seen[v] = True
        if not comps:
            nid = new_node(v, [])
            top[v] = nid
        elif len(comps) == 1:
            r = comps[0]
            uf[v] = r
            nid = top[r]
            if v == last:
                nid = new_node(v, [top.pop(r)])
        else:
            # comps is ordered by first-touching neighbor index (nbrs are sorted)
            nid = top[comps[0]]
            for r in comps[1:]:
                nid = new_node(v, [nid, top[r]])
            keep = comps[0]
            for r in comps[1:]:
                uf[r] = keep
                del top[r]
            uf[v] = keep
            top[keep] = nid
        arc[v] = nid
        if v == last and (len(comps) != 1):
            # the last vertex opened or merged components; give it a separate root
            new_node(v, [nid])

    root = len(node_vertex) - 1
    tree = MergeTree(
        variant,
        node_vertex,
        values[np.array(node_vertex, dtype=np.int64)],
        node_parent,
        node_children,
        root,
        meta={"connectivity": CONNECTIVITY, "dims": list(g.dims)},
    )
    return tree, Segmentation.from_arcs(g.dims, arc, tree.n)


def _oldest_leaves(t: MergeTree) -> np.ndarray:
    oldest = np.empty(t.n, dtype=np.int64)
    for i in t.postorder():
        ch = t.children[i]
        if not ch:
            oldest[i] = i
        else:
            oldest[i] = min((oldest[c] for c in ch), key=t.elder_key)
    return oldest


def pair_persistence(t: MergeTree) -> PersistencePairing:
    """Elder-rule pairing of a binary merge tree.

    At a saddle the branch whose oldest extremum was swept later dies and
    pairs with the saddle; the survivor continues. The last survivor pairs
    with the root.
    """
    oldest = _oldest_leaves(t)
    partner = np.full(t.n, -1, dtype=np.int64)
    for i in t.postorder():
        ch = t.children[i]
        if not ch:
            continue
        if i == t.root:
            if len(ch) != 1:
                raise ValueError("root must have exactly one child")
            dying = oldest[ch[0]]
        else:
            if len(ch) != 2:
                raise ValueError(f"saddle {i} has {len(ch)} children; tree is not binary")
            a, b = oldest[ch[0]], oldest[ch[1]]
            dying = b if t.elder_key(a) < t.elder_key(b) else a
        partner[i] = dying
        partner[dying] = i
    if t.n == 1:
        partner[t.root] = t.root
    own = t.value
    other = t.value[partner]
    return PersistencePairing(partner, np.minimum(own, other), np.maximum(own, other))


def unpaired_leaves(t: MergeTree) -> np.ndarray:
    """For every node ``x``, the leaf of ``T[x]`` whose partner lies above ``x``.

    For the root this is the global extremum (paired with the root itself).
    """
    return _oldest_leaves(t)


def unpaired_leaf(t: MergeTree, p: PersistencePairing | None, root_of_subtree: int) -> int:
    leaves = t.subtree_nodes(root_of_subtree)
    return int(min((x for x in leaves if not t.children[x]), key=t.elder_key))


@dataclass(frozen=True)
class SubtreeStats:
    size: int
    volume: int
    agg_pers: float


def subtree_stats_all(t: MergeTree, s: Segmentation | None, p: PersistencePairing) -> list[SubtreeStats]:
    """Stats for every subtree in one bottom-up pass.

    ``agg_pers`` sums each pair whose two nodes both lie in the subtree,
    counted once at its non-leaf member.
    """
    size = np.zeros(t.n, dtype=np.int64)
    vol = np.zeros(t.n, dtype=np.int64)
    agg = np.zeros(t.n, dtype=np.float64)
    counts = s.counts if s is not None else np.zeros(t.n, dtype=np.int64)
    pers = p.pers
    for i in t.postorder():
        size[i] = 1 + sum(size[c] for c in t.children[i])
        vol[i] = counts[i] + sum(vol[c] for c in t.children[i])
        own = pers[i] if t.children[i] else 0.0
        agg[i] = own + sum(agg[c] for c in t.children[i])
    return [SubtreeStats(int(size[i]), int(vol[i]), float(agg[i])) for i in range(t.n)]


def subtree_stats(t: MergeTree, s: Segmentation | None, p: PersistencePairing, root: int) -> SubtreeStats:
    nodes = t.subtree_nodes(root)
    counts = s.counts if s is not None else np.zeros(t.n, dtype=np.int64)
    agg = sum(float(p.pers[x]) for x in nodes if t.children[x])
    return SubtreeStats(len(nodes), int(sum(int(counts[x]) for x in nodes)), agg)


def subtree_vertices(t: MergeTree, s: Segmentation, root: int) -> np.ndarray:
    """Grid vertices mapped to ``T[root]`` (sorted)."""
    mask = np.zeros(t.n, dtype=bool)
    mask[t.subtree_nodes(root)] = True
    return np.flatnonzero(mask[s.arc])


def simplify(
    t: MergeTree,
    s: Segmentation | None,
    p: PersistencePairing,
    threshold: float,
) -> tuple[MergeTree, Segmentation | None, PersistencePairing]:
    """Cancel leaf-saddle pairs with persistence below ``threshold * range``.

    Pairs are removed lowest persistence first; ties go to the smaller leaf
    id. Only pairs whose leaf hangs directly below its saddle are removable at
    any moment, which is enough because any pair nested inside a candidate has
    no larger persistence. Removed arcs are absorbed by the surviving sibling.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    span = float(t.value.max() - t.value.min())
    cutoff = threshold * span
    parent = t.parent.tolist()
    children = [list(ch) for ch in t.children]
    partner = p.partner.tolist()
    pers = p.pers.tolist()
    alive = [True] * t.n
    absorbed_by = list(range(t.n))

    def candidate(leaf: int):
        sad = partner[leaf]
        if children[leaf] or sad == leaf or sad == t.root or parent[leaf] != sad:
            return None
        return (pers[leaf], leaf)

    heap = [c for c in (candidate(x) for x in range(t.n)) if c is not None]
    heapq.heapify(heap)
    while heap and heap[0][0] < cutoff:
        _, leaf = heapq.heappop(heap)
        if not alive[leaf] or candidate(leaf) is None:
            continue
        sad = partner[leaf]
        sib = next(c for c in children[sad] if c != leaf)
        up = parent[sad]
        children[up][children[up].index(sad)] = sib
        parent[sib] = up
        alive[leaf] = alive[sad] = False
        absorbed_by[leaf] = absorbed_by[sad] = sib
        c = candidate(sib) if not children[sib] else None
        if c is not None:
            heapq.heappush(heap, c)

    keep = [i for i in range(t.n) if alive[i]]
    new_id = {old: k for k, old in enumerate(keep)}

    def resolve(i: int) -> int:
        while not alive[i]:
            i = absorbed_by[i]
        return i

    tree = MergeTree(
        t.variant,
        t.vertex[keep],
        t.value[keep],
        [new_id[parent[i]] if parent[i] != -1 else -1 for i in keep],
        [[new_id[c] for c in children[i]] for i in keep],
        new_id[t.root],
        meta={**t.meta, "simplify_threshold": threshold},
    )
    seg = None
    if s is not None:
        remap = np.array([new_id[resolve(i)] for i in range(t.n)], dtype=np.int64)
        seg = Segmentation.from_arcs(s.dims, remap[s.arc], tree.n)
    return tree, seg, pair_persistence(tree)


def merge_tree_from_field(g: ScalarGrid, variant: str = "split", threshold: float = 0.0):
    """Build, pair and (optionally) simplify in one call."""
    t, s = build_merge_tree(g, variant)
    p = pair_persistence(t)
    if threshold > 0:
        t, s, p = simplify(t, s, p, threshold)
    return t, s, p


def tree_to_json(t: MergeTree, p: PersistencePairing | None = None) -> dict:
    p = pair_persistence(t) if p is None else p
    nodes = [
        {
            "id": i,
            "vertex": int(t.vertex[i]),
            "value": float(t.value[i]),
            "parent": int(t.parent[i]) if t.parent[i] != -1 else None,
            "children": list(t.children[i]),
            "kind": t.kind(i),
            "partner": int(p.partner[i]),
            "pers": float(p.pers[i]),
        }
        for i in range(t.n)
    ]
    return {"variant": t.variant, "nodes": nodes, "root": int(t.root), "meta": t.meta}


def tree_from_json(doc: dict) -> MergeTree:
    nodes = sorted(doc["nodes"], key=lambda nd: nd["id"])
    tree = MergeTree(
        doc["variant"],
        [nd["vertex"] for nd in nodes],
        [nd["value"] for nd in nodes],
        [-1 if nd["parent"] is None else nd["parent"] for nd in nodes],
        [nd["children"] for nd in nodes],
        doc["root"],
        meta=dict(doc.get("meta", {})),
    )
    tree.validate()
    return tree


def save_tree(t: MergeTree, path, p: PersistencePairing | None = None) -> None:
    Path(path).write_text(json.dumps(tree_to_json(t, p), indent=1, sort_keys=True) + "\n")


def load_tree(path) -> MergeTree:
    return tree_from_json(json.loads(Path(path).read_text()))


def save_segmentation(s: Segmentation, path) -> None:
    """Arc ids in the ASCII field layout (one integer per vertex)."""
    nx = s.dims[0]
    ids = s.arc.tolist()
    rows = [" ".join(map(str, ids[k:k + nx])) for k in range(0, len(ids), nx)]
    Path(path).write_text("dims " + " ".join(map(str, s.dims)) + "\n" + "\n".join(rows) + "\n")


def load_segmentation(path, n_nodes: int) -> Segmentation:
    lines = Path(path).read_text().splitlines()
    dims = tuple(int(x) for x in lines[0].split()[1:])
    arc = np.array(" ".join(lines[1:]).split(), dtype=np.int64)
    if arc.size != int(np.prod(dims)):
        raise ValueError(f"{path}: dimension mismatch")
    return Segmentation.from_arcs(dims, arc, n_nodes)


@dataclass(frozen=True)
class SubtreeRef:
    """A subtree ``T[root]`` with the bookkeeping needed for local comparison.

    ``upath`` is the child of ``root`` on the path to the unpaired leaf
    (``-1`` when the root is a leaf); ``dummy_value`` is the value of the
    parent of ``root`` (the root value for the whole tree). ``pre``/``post``
    delimit the subtree in a preorder numbering, so containment is an
    interval test.
    """

    tree_id: str
    root: int
    size: int
    volume: int
    agg_pers: float
    unpaired: int
    upath: int
    dummy_value: float
    pre: int
    post: int

    def contains(self, other: "SubtreeRef") -> bool:
        return self.pre <= other.pre and other.post <= self.post

    def to_json(self) -> dict:
        return {
            "tree": self.tree_id, "root": self.root, "size": self.size, "volume": self.volume,
            "agg_pers": self.agg_pers, "unpaired": self.unpaired, "upath": self.upath,
            "dummy_value": self.dummy_value, "pre": self.pre, "post": self.post,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SubtreeRef":
        return cls(d["tree"], d["root"], d["size"], d["volume"], d["agg_pers"], d["unpaired"],
                   d["upath"], d["dummy_value"], d["pre"], d["post"])


@dataclass
class SegmentedTree:
    """A merge tree bundled with its segmentation (optional) and pairing."""

    tree: MergeTree
    seg: Segmentation | None = None
    pairing: PersistencePairing | None = None
    label: str = "T"

    def __post_init__(self):
        if self.pairing is None:
            self.pairing = pair_persistence(self.tree)
        self._refs: list[SubtreeRef] | None = None

    @classmethod
    def from_field(cls, g: ScalarGrid, variant: str = "split", threshold: float = 0.0,
                   label: str = "T") -> "SegmentedTree":
        t, s, p = merge_tree_from_field(g, variant, threshold)
        return cls(t, s, p, label)

    def subtree_refs(self) -> list[SubtreeRef]:
        """One ref per node, indexed by node id."""
        if self._refs is None:
            t = self.tree
            stats = subtree_stats_all(t, self.seg, self.pairing)
            unpaired = unpaired_leaves(t)
            pre = np.zeros(t.n, dtype=np.int64)
            for k, i in enumerate(reversed(t.postorder())):
                pre[i] = k
            # reversed postorder is a preorder with children visited right to left;
            # the subtree of i then spans [pre[i], pre[i] + size - 1]
            refs = []
            for i in range(t.n):
                up = next((c for c in t.children[i] if unpaired[c] == unpaired[i]), -1)
                par = int(t.parent[i])
                dummy = float(t.value[par] if par != -1 else t.value[i])
                st = stats[i]
                refs.append(SubtreeRef(self.label, i, st.size, st.volume, st.agg_pers, int(unpaired[i]),
                                       int(up), dummy, int(pre[i]), int(pre[i] + st.size - 1)))
            self._refs = refs
        return self._refs

    def vertices(self, root: int) -> np.ndarray:
        if self.seg is None:
            raise ValueError("tree has no segmentation")
        return subtree_vertices(self.tree, self.seg, root)

"""Symmetry grouping, region-matched comparison, and overlap-based feature tracking."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .local_distance import DistanceMatrix
from .merge_tree import SegmentedTree, SubtreeRef

DEFAULT_TAU = 0.01
DEFAULT_OVERLAP_MIN = 0.02
DEFAULT_MIN_LEN = 10
DEFAULT_MIN_WEIGHT = 3.0


# symmetry


@dataclass
class SymmetryGroups:
    groups: list[list[SubtreeRef]]
    tau: float

    def roots(self) -> list[list[int]]:
        return [[r.root for r in g] for g in self.groups]

    def to_json(self) -> dict:
        return {"tau": self.tau, "groups": self.roots()}


def symmetry_groups(dm: DistanceMatrix, tau: float = DEFAULT_TAU) -> SymmetryGroups:
    """Connected components (two or more members) of the graph ``lmted <= tau``.

    ``dm`` must compare a tree with itself. Groups and their members follow
    the matrix's subtree order.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    roots = [c.root for c in dm.cols]
    if sorted(roots) != sorted(r.root for r in dm.rows):
        raise ValueError("symmetry grouping needs a self-comparison matrix")
    pos = {r: k for k, r in enumerate(roots)}
    link = list(range(len(roots)))

    def find(x):
        while link[x] != x:
            link[x] = link[link[x]]
            x = link[x]
        return x

    for r_idx, rref in enumerate(dm.rows):
        for c_idx, cref in enumerate(dm.cols):
            v = dm.values[r_idx, c_idx]
            if rref.root != cref.root and not np.isnan(v) and v <= tau:
                a, b = find(pos[rref.root]), find(pos[cref.root])
                if a != b:
                    link[max(a, b)] = min(a, b)
    members: dict[int, list[SubtreeRef]] = {}
    for k, ref in enumerate(dm.cols):
        members.setdefault(find(k), []).append(ref)
    groups = [g for _, g in sorted(members.items()) if len(g) >= 2]
    return SymmetryGroups(groups, float(tau))


# regions


def overlap(a, b) -> float:
    """Jaccard index of two vertex sets; two empty sets give 0."""
    a = np.unique(np.asarray(a, dtype=np.int64))
    b = np.unique(np.asarray(b, dtype=np.int64))
    union = a.size + b.size
    if union == 0:
        return 0.0
    inter = np.intersect1d(a, b, assume_unique=True).size
    return inter / (union - inter)


def subtree_vertex_sets(st: SegmentedTree) -> list[np.ndarray]:
    """Sorted grid vertices of every subtree, indexed by root id."""
    if st.seg is None:
        raise ValueError("tree has no segmentation")
    refs = st.subtree_refs()
    pre = np.array([r.pre for r in refs])
    vpre = pre[st.seg.arc]
    order = np.argsort(vpre, kind="stable")
    sorted_pre = vpre[order]
    out = []
    for r in refs:
        lo = np.searchsorted(sorted_pre, r.pre, "left")
        hi = np.searchsorted(sorted_pre, r.post, "right")
        out.append(np.sort(order[lo:hi]))
    return out


@dataclass(frozen=True)
class RegionPair:
    a: SubtreeRef
    b: SubtreeRef
    overlap: float
    lmted: float | None = None


def _spanning_roots(st: SegmentedTree) -> set[int]:
    """The root and its single child: they cover the domain (minus the root vertex) in any field."""
    t = st.tree
    return {t.root, *t.children[t.root]}


def region_matched_pairs(st_a: SegmentedTree, st_b: SegmentedTree, min_overlap: float = 1.0,
                         include_spanning: bool = False) -> list[RegionPair]:
    """Subtree pairs covering the same domain region, largest region first.

    ``min_overlap = 1`` demands identical vertex sets; smaller values give a
    relaxed matching where each pair with Jaccard index at least
    ``min_overlap`` is reported. The two domain-spanning subtrees of each
    tree match each other regardless of the data and are skipped unless
    ``include_spanning``.
    """
    if st_a.seg is None or st_b.seg is None:
        raise ValueError("region matching needs segmentations")
    if tuple(st_a.seg.dims) != tuple(st_b.seg.dims):
        raise ValueError(f"dimension mismatch: {st_a.seg.dims} vs {st_b.seg.dims}")
    if not 0.0 < min_overlap <= 1.0:
        raise ValueError("min_overlap must lie in (0, 1]")
    ra, rb = st_a.subtree_refs(), st_b.subtree_refs()
    va, vb = subtree_vertex_sets(st_a), subtree_vertex_sets(st_b)
    if not include_spanning:
        empty = np.empty(0, dtype=np.int64)
        skip_a, skip_b = _spanning_roots(st_a), _spanning_roots(st_b)
        va = [empty if k in skip_a else v for k, v in enumerate(va)]
        vb = [empty if k in skip_b else v for k, v in enumerate(vb)]
    pairs = []
    if min_overlap >= 1.0:
        index: dict[bytes, list[int]] = {}
        for k, v in enumerate(vb):
            if v.size:
                index.setdefault(v.tobytes(), []).append(k)
        for i, v in enumerate(va):
            for j in index.get(v.tobytes(), []) if v.size else []:
                pairs.append(RegionPair(ra[i], rb[j], 1.0))
    else:
        for i, v in enumerate(va):
            for j, w in enumerate(vb):
                o = overlap(v, w)
                if o >= min_overlap:
                    pairs.append(RegionPair(ra[i], rb[j], o))
    pairs.sort(key=lambda p: (-p.a.volume, -p.b.volume, p.a.root, p.b.root))
    return pairs


def with_distances(pairs: Sequence[RegionPair], dm: DistanceMatrix) -> list[RegionPair]:
    """Attach ``lmted`` values (``dm`` columns from tree a, rows from tree b)."""
    return [RegionPair(p.a, p.b, p.overlap, dm.get(p.a.root, p.b.root)) for p in pairs]


def region_pairs_to_csv(pairs: Sequence[RegionPair]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pair", "root_a", "root_b", "volume", "overlap", "lmted"])
    for k, p in enumerate(pairs):
        lm = "PRUNED" if p.lmted is None else repr(p.lmted)
        w.writerow([k, p.a.root, p.b.root, p.a.volume, repr(p.overlap), lm])
    return buf.getvalue()


def region_pairs_from_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        out.append({
            "pair": int(r["pair"]), "root_a": int(r["root_a"]), "root_b": int(r["root_b"]),
            "volume": int(r["volume"]), "overlap": float(r["overlap"]),
            "lmted": None if r["lmted"] == "PRUNED" else float(r["lmted"]),
        })
    return out


# tracking


@dataclass(frozen=True)
class TrackNode:
    t: int
    root: int
    volume: int


@dataclass
class Track:
    nodes: list[int]
    weight: float
    edge_weights: list[float] = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.nodes)


@dataclass
class TrackGraph:
    """Layered graph: one layer of subtree nodes per timestep.

    ``edges`` holds ``(source, target, overlap)`` with node indices into
    ``nodes``; sources always sit one timestep before their targets.
    """

    nodes: list[TrackNode]
    edges: list[tuple[int, int, float]]
    tracks: list[Track] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def node_index(self, t: int, root: int) -> int:
        for k, nd in enumerate(self.nodes):
            if nd.t == t and nd.root == root:
                return k
        raise KeyError(f"no node for root {root} at timestep {t}")

    def out_edges(self) -> list[list[tuple[int, float]]]:
        out: list[list[tuple[int, float]]] = [[] for _ in self.nodes]
        for a, b, w in self.edges:
            out[a].append((b, w))
        return out

    def in_edges(self) -> list[list[tuple[int, float]]]:
        inc: list[list[tuple[int, float]]] = [[] for _ in self.nodes]
        for a, b, w in self.edges:
            inc[b].append((a, w))
        return inc

    def to_json(self) -> dict:
        return {
            "nodes": [{"t": n.t, "root": n.root, "volume": n.volume} for n in self.nodes],
            "edges": [{"from": a, "to": b, "weight": w} for a, b, w in self.edges],
            "tracks": [{"nodes": tr.nodes, "length": tr.length, "weight": tr.weight,
                        "edge_weights": tr.edge_weights} for tr in self.tracks],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TrackGraph":
        nodes = [TrackNode(int(n["t"]), int(n["root"]), int(n["volume"])) for n in doc["nodes"]]
        edges = [(int(e["from"]), int(e["to"]), float(e["weight"])) for e in doc["edges"]]
        tracks = [Track(list(tr["nodes"]), float(tr["weight"]), [float(w) for w in tr.get("edge_weights", [])])
                  for tr in doc.get("tracks", [])]
        return cls(nodes, edges, tracks, dict(doc.get("meta", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TrackGraph":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_track_graph(
    steps: Sequence[SegmentedTree],
    dms: Sequence[DistanceMatrix | None],
    overlap_min: float = DEFAULT_OVERLAP_MIN,
    max_volume_fraction: float = 1.0,
    include_root: bool = False,
    leaves_only: bool = False,
) -> TrackGraph:
    """Overlap-weighted graph over the subtrees of consecutive timesteps.

    ``dms[k]`` compares step ``k`` (columns) with step ``k + 1`` (rows); an
    edge needs the pair to be retained there (``None`` retains every pair)
    and a Jaccard overlap of at least ``overlap_min``. The whole-tree
    subtree spans the domain at every step, so it is left out unless
    ``include_root``. Subtrees covering more than ``max_volume_fraction`` of
    the domain are left out as well. With ``leaves_only`` only single-leaf
    subtrees become nodes, so every track follows one extremum; saddle
    subtrees group several features and otherwise form tracks of their own.
    """
    if len(dms) != max(len(steps) - 1, 0):
        raise ValueError("need one distance matrix per consecutive pair of timesteps")
    dims = None
    for st in steps:
        if st.seg is None:
            raise ValueError("tracking needs segmentations")
        if dims is not None and tuple(st.seg.dims) != dims:
            raise ValueError(f"dimension mismatch across timesteps: {dims} vs {tuple(st.seg.dims)}")
        dims = tuple(st.seg.dims)
    nodes: list[TrackNode] = []
    index: list[dict[int, int]] = []
    vsets: list[list[np.ndarray]] = []
    for t, st in enumerate(steps):
        total = st.seg.arc.size
        layer = {}
        for ref in st.subtree_refs():
            if ref.root == st.tree.root and not include_root:
                continue
            if ref.volume > max_volume_fraction * total:
                continue
            if leaves_only and ref.size > 1:
                continue
            layer[ref.root] = len(nodes)
            nodes.append(TrackNode(t, ref.root, ref.volume))
        index.append(layer)
        vsets.append(subtree_vertex_sets(st))
    edges = []
    for t in range(len(steps) - 1):
        dm = dms[t]
        for ra, ia in sorted(index[t].items(), key=lambda kv: kv[1]):
            for rb, ib in sorted(index[t + 1].items(), key=lambda kv: kv[1]):
                if dm is not None and dm.get(ra, rb) is None:
                    continue
                w = overlap(vsets[t][ra], vsets[t + 1][rb])
                if w > 0 and w >= overlap_min:
                    edges.append((ia, ib, w))
    meta = {"overlap_min": overlap_min, "max_volume_fraction": max_volume_fraction,
            "include_root": include_root, "leaves_only": leaves_only}
    return TrackGraph(nodes, edges, [], meta)


def _best_path(g: TrackGraph, alive: list[bool], order: str):
    """Best path among live nodes, scored lexicographically by ``order``."""
    n = len(g.nodes)
    inc = g.in_edges()
    best: list[tuple[float, float] | None] = [None] * n
    prev = [-1] * n
    prev_w = [0.0] * n
    by_time = sorted(range(n), key=lambda k: (g.nodes[k].t, k))
    for v in by_time:
        if not alive[v]:
            continue
        score = (0.0, 1.0) if order == "weight" else (1.0, 0.0)
        for u, w in sorted(inc[v]):
            if not alive[u] or best[u] is None:
                continue
            bu = best[u]
            cand = (bu[0] + w, bu[1] + 1.0) if order == "weight" else (bu[0] + 1.0, bu[1] + w)
            if cand > score:
                score, prev[v], prev_w[v] = cand, u, w
        best[v] = score
    live = [v for v in range(n) if best[v] is not None]
    if not live:
        return None
    end = max(live, key=lambda v: (best[v], -v))
    path, weights = [end], []
    while prev[path[-1]] != -1:
        weights.append(prev_w[path[-1]])
        path.append(prev[path[-1]])
    path.reverse()
    weights.reverse()
    return Track(path, float(sum(weights)), weights)


def top_tracks(
    g: TrackGraph,
    order: str = "weight",
    min_len: int = DEFAULT_MIN_LEN,
    min_weight: float = DEFAULT_MIN_WEIGHT,
    k: int | None = None,
) -> list[Track]:
    """Greedy node-disjoint track extraction.

    Repeatedly takes the best remaining path (by total overlap weight, or by
    length with ``order="length"``), removes its nodes, and stops after
    ``k`` tracks or once the best remaining path fails the length/weight
    filters.
    """
    if order not in ("weight", "length"):
        raise ValueError("order must be 'weight' or 'length'")
    alive = [True] * len(g.nodes)
    out: list[Track] = []
    while k is None or len(out) < k:
        tr = _best_path(g, alive, order)
        if tr is None or tr.length < min_len or tr.weight < min_weight:
            break
        out.append(tr)
        for v in tr.nodes:
            alive[v] = False
    return out


def extend_track(g: TrackGraph, start: int) -> Track:
    """Follow the heaviest edge forwards and backwards from ``start``."""
    out, inc = g.out_edges(), g.in_edges()

    def walk(edges_of, v):
        path, ws = [], []
        while edges_of[v]:
            nxt, w = max(edges_of[v], key=lambda e: (e[1], -e[0]))
            path.append(nxt)
            ws.append(w)
            v = nxt
        return path, ws

    fwd, fw = walk(out, start)
    back, bw = walk(inc, start)
    nodes = back[::-1] + [start] + fwd
    weights = bw[::-1] + fw
    return Track(nodes, float(sum(weights)), weights)


def query_track(g: TrackGraph, t: int, root: int, self_dm: DistanceMatrix | None = None,
                tau_sym: float = 0.0) -> list[Track]:
    """Tracks through the queried subtree and the subtrees symmetric to it at step ``t``.

    Symmetric partners come from ``self_dm`` (a self-comparison at step
    ``t``) with threshold ``tau_sym``; partners missing from the graph are
    skipped.
    """
    start = g.node_index(t, root)
    roots = [root]
    if self_dm is not None:
        for grp in symmetry_groups(self_dm, tau_sym).groups:
            if any(r.root == root for r in grp):
                roots = [r.root for r in grp]
    tracks = []
    for r in roots:
        try:
            k = g.node_index(t, r)
        except KeyError:
            continue
        tracks.append(extend_track(g, k if r != root else start))
    return tracks

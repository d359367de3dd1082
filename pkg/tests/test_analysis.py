import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmted.analysis import (
    TrackGraph, TrackNode, build_track_graph, overlap, query_track, region_matched_pairs,
    region_pairs_from_csv, region_pairs_to_csv, subtree_vertex_sets, symmetry_groups, top_tracks,
    with_distances,
)
from lmted.field_io import ScalarGrid, neighbor_lists, normalize_range
from lmted.local_distance import DistanceMatrix, lmted_all_pairs
from lmted.merge_tree import SegmentedTree
from lmted.refinement import RefinementConfig
from lmted.synthetic import gaussian, symmetric_bumps_field


def test_overlap_examples():
    assert overlap([1, 2, 3], [3, 2, 1]) == 1.0
    assert overlap([1, 2], [3, 4]) == 0.0
    a = np.arange(100)
    b = np.arange(60, 120)
    assert overlap(a, b) == pytest.approx(40 / 120)
    assert overlap([], []) == 0.0


@settings(max_examples=100, deadline=None)
@given(a=st.sets(st.integers(0, 30)), b=st.sets(st.integers(0, 30)))
def test_overlap_properties(a, b):
    o = overlap(sorted(a), sorted(b))
    assert o == overlap(sorted(b), sorted(a))
    assert 0.0 <= o <= 1.0
    if a:
        assert overlap(sorted(a), sorted(a)) == 1.0


# symmetry


def _bumps_self_dm(seed=0, n=64, noise=0.01):
    g, centers = symmetric_bumps_field(n, noise, seed)
    st_ = SegmentedTree.from_field(normalize_range(g), "split", 0.01)
    return st_, centers, lmted_all_pairs(st_, st_, RefinementConfig(self_mode=True))


def _near(st_, root, center, tol=2):
    cy, cx = center
    n = st_.seg.dims[0]
    v = int(st_.tree.vertex[root])
    return abs(v // n - cy) + abs(v % n - cx) <= tol


def test_four_bumps_form_one_group():
    st_, centers, dm = _bumps_self_dm()
    groups = symmetry_groups(dm, 0.01)
    assert len(groups.groups) == 1
    members = groups.roots()[0]
    assert len(members) == 4
    for c in centers:
        assert sum(_near(st_, r, c) for r in members) == 1


def test_tau_zero_groups_only_equal_entries():
    st_, _, dm = _bumps_self_dm(seed=3)
    for grp in symmetry_groups(dm, 0.0).roots():
        for a in grp:
            assert any(b != a and dm.get(a, b) == 0.0 for b in grp)


def test_large_tau_single_group_of_retained():
    st_, _, dm = _bumps_self_dm(seed=1)
    groups = symmetry_groups(dm, 1e9).roots()
    involved = {p for pair in dm.retained_pairs() for p in pair}
    assert len(groups) == 1 and set(groups[0]) == involved


def test_symmetry_permutation_invariant():
    _, _, dm = _bumps_self_dm(seed=2)
    rng = np.random.default_rng(0)
    pr, pc = rng.permutation(len(dm.rows)), rng.permutation(len(dm.cols))
    shuffled = DistanceMatrix([dm.rows[k] for k in pr], [dm.cols[k] for k in pc], dm.values[np.ix_(pr, pc)])
    for tau in (0.0, 0.01, 0.1):
        a = sorted(sorted(g) for g in symmetry_groups(dm, tau).roots())
        b = sorted(sorted(g) for g in symmetry_groups(shuffled, tau).roots())
        assert a == b


def test_symmetry_errors():
    _, _, dm = _bumps_self_dm(n=32)
    with pytest.raises(ValueError):
        symmetry_groups(dm, -1.0)
    other = SegmentedTree.from_field(ScalarGrid((5,), [0, 3, 1, 2, 0]), "split", 0.0)
    st_, _, _ = _bumps_self_dm(n=32)
    with pytest.raises(ValueError):
        symmetry_groups(lmted_all_pairs(st_, other), 0.1)


# tracking: hand-built graphs


def _chains(specs):
    """Graph made of disjoint chains; ``specs`` lists each chain's edge weights."""
    nodes, edges = [], []
    for c, weights in enumerate(specs):
        ids = []
        for t in range(len(weights) + 1):
            ids.append(len(nodes))
            nodes.append(TrackNode(t, 100 * c + t, 10))
        edges += [(ids[k], ids[k + 1], w) for k, w in enumerate(weights)]
    return TrackGraph(nodes, edges, [], {})


def test_single_chain_is_first_track():
    g = _chains([[0.5] * 11])
    tracks = top_tracks(g)
    assert len(tracks) == 1
    assert tracks[0].nodes == list(range(12)) and tracks[0].weight == pytest.approx(5.5)


def test_disjoint_chains_ordered_by_weight():
    g = _chains([[0.4] * 10, [0.5] * 10])
    tracks = top_tracks(g, min_weight=0.0)
    assert [round(t.weight, 9) for t in tracks] == [5.0, 4.0]
    g_len = _chains([[0.9] * 10, [0.3] * 14])
    by_len = top_tracks(g_len, order="length", min_weight=0.0)
    assert [t.length for t in by_len] == [15, 11]


def test_short_chain_filtered():
    assert top_tracks(_chains([[1.0] * 7])) == []  # 8 nodes
    assert top_tracks(_chains([[0.2] * 12])) == []  # weight 2.4 < 3


def test_top_tracks_disjoint_and_filtered():
    rng = np.random.default_rng(5)
    nodes = [TrackNode(t, k, 1) for t in range(12) for k in range(3)]
    edges = [(3 * t + a, 3 * (t + 1) + b, float(rng.uniform(0.05, 1)))
             for t in range(11) for a in range(3) for b in range(3) if rng.random() < 0.6]
    g = TrackGraph(nodes, edges, [], {})
    tracks = top_tracks(g, min_len=4, min_weight=1.0)
    seen = set()
    for tr in tracks:
        assert not seen & set(tr.nodes)
        seen |= set(tr.nodes)
        assert tr.length >= 4 and tr.weight >= 1.0
        assert [g.nodes[v].t for v in tr.nodes] == list(range(g.nodes[tr.nodes[0]].t, g.nodes[tr.nodes[-1]].t + 1))
    weights = [t.weight for t in tracks]
    assert weights == sorted(weights, reverse=True)


def test_query_on_chain_returns_whole_chain():
    g = _chains([[0.5] * 5, [0.7] * 5])
    tracks = query_track(g, 2, 102)
    assert len(tracks) == 1 and tracks[0].nodes == list(range(6, 12))
    with pytest.raises(KeyError):
        query_track(g, 2, 999)


# tracking: fields


def _steps(arrays, simplify=0.0):
    return [SegmentedTree.from_field(normalize_range(ScalarGrid.from_array(a)), "split", simplify, f"t{k}")
            for k, a in enumerate(arrays)]


def test_static_field_gives_straight_tracks():
    base = gaussian((24, 24), (6, 6), 2.0, 1.0) + gaussian((24, 24), (16, 15), 2.5, 0.7)
    base += gaussian((24, 24), (5, 18), 2.0, 0.5)
    steps = _steps([base] * 6)
    g = build_track_graph(steps, [None] * 5, overlap_min=0.02)
    n_regions = steps[0].tree.n - 1
    tracks = top_tracks(g, min_len=6, min_weight=0.0)
    assert len(tracks) == n_regions
    for tr in tracks:
        assert tr.edge_weights == [1.0] * 5
        assert len({g.nodes[v].root for v in tr.nodes}) == 1


def test_jumping_region_has_no_successor():
    x = np.arange(90, dtype=float)

    def bumps(c):
        return sum(h * np.exp(-(x - p) ** 2 / 8) for p, h in ((0, 3.0), (45, 3.0), (89, 3.0), (c, 1.0)))

    steps = _steps([bumps(20), bumps(68)])
    g = build_track_graph(steps, [None], leaves_only=True)

    def bump_node(t, v):
        tree = steps[t].tree
        return g.node_index(t, next(l for l in tree.leaves if int(tree.vertex[l]) == v))

    before, after = bump_node(0, 20), bump_node(1, 68)
    # the vacated cells are absorbed by a neighbour, but the bump itself has no successor
    assert after not in [v for v, _ in g.out_edges()[before]]


def _arc_region(values, dims, leaf_vertex, parent_vertex):
    """Vertices that join the leaf's component before the parent vertex is swept."""
    order = np.lexsort((np.arange(values.size), -values))
    rank = np.empty(values.size, dtype=np.int64)
    rank[order] = np.arange(values.size)
    cut = rank[parent_vertex]
    nbrs = neighbor_lists(dims)
    seen, stack = {leaf_vertex}, [leaf_vertex]
    while stack:
        v = stack.pop()
        for u in nbrs[v]:
            if u not in seen and rank[u] < cut:
                seen.add(u)
                stack.append(u)
    return np.array(sorted(seen))


def test_two_blobs_edge_weights_match_flood_fill_regions():
    n, T = 64, 6
    arrays = [gaussian((n, n), (20, 10 + t), 3.0, 1.0) + gaussian((n, n), (44, 30 + t), 3.0, 0.8) for t in range(T)]
    steps = _steps(arrays)
    assert all(len(s.tree.leaves) == 2 for s in steps)
    g = build_track_graph(steps, [None] * (T - 1), leaves_only=True)
    tracks = top_tracks(g, min_len=T, min_weight=0.0)
    assert len(tracks) == 2
    for tr in tracks:
        for k, (a, b) in enumerate(zip(tr.nodes, tr.nodes[1:])):
            ra, rb = [], []
            for node, out in ((g.nodes[a], ra), (g.nodes[b], rb)):
                tree = steps[node.t].tree
                vals = normalize_range(ScalarGrid.from_array(arrays[node.t])).values
                out.append(_arc_region(vals, (n, n), int(tree.vertex[node.root]),
                                       int(tree.vertex[tree.parent[node.root]])))
            inter = np.intersect1d(ra[0], rb[0]).size
            expected = inter / (ra[0].size + rb[0].size - inter)
            assert tr.edge_weights[k] == pytest.approx(expected, abs=1e-15)
            assert 0.5 < expected < 1.0


def test_query_four_translating_blobs():
    n, T = 40, 5
    c = (n - 1) / 2
    arr = sum(gaussian((n, n), (c + dy, c + dx), 2.5, 1.0) for dy, dx in ((-9, 0), (9, 0), (0, -9), (0, 9)))
    steps = _steps([np.roll(arr, t, axis=1) for t in range(T)], 0.01)
    dms = [lmted_all_pairs(steps[k], steps[k + 1], RefinementConfig()) for k in range(T - 1)]
    g = build_track_graph(steps, dms, leaves_only=True)
    self_dm = lmted_all_pairs(steps[0], steps[0], RefinementConfig(self_mode=True))
    leaf = steps[0].tree.leaves[0]
    tracks = query_track(g, 0, leaf, self_dm, 1e-6)
    assert len(tracks) == 4
    starts = set()
    for tr in tracks:
        assert tr.length == T
        verts = [int(steps[g.nodes[v].t].tree.vertex[g.nodes[v].root]) for v in tr.nodes]
        assert np.diff(verts).tolist() == [1] * (T - 1)  # one column to the right per step
        starts.add(verts[0])
    assert len(starts) == 4
    assert len(query_track(g, 0, leaf, self_dm, 0.0)) >= 1
    assert len(query_track(g, 0, leaf)) == 1


def test_track_graph_validation():
    a = _steps([np.zeros((4, 4)) + np.arange(16).reshape(4, 4)])[0]
    b = _steps([np.arange(10.0)])[0]
    with pytest.raises(ValueError):
        build_track_graph([a, b], [None])
    with pytest.raises(ValueError):
        build_track_graph([a, a], [])


def test_track_graph_json_round_trip(tmp_path):
    g = _chains([[0.5, 0.25], [1.0]])
    g.tracks = top_tracks(g, min_len=1, min_weight=0.0)
    g.save(tmp_path / "g.json")
    back = TrackGraph.load(tmp_path / "g.json")
    assert back.nodes == g.nodes and back.edges == g.edges and back.meta == g.meta
    assert [(t.nodes, t.weight, t.edge_weights) for t in back.tracks] == \
        [(t.nodes, t.weight, t.edge_weights) for t in g.tracks]


# region matching


def _line_field(values):
    return SegmentedTree.from_field(ScalarGrid((len(values),), values), "split", 0.0)


def _peaks(x, bumps):
    return sum(h * np.exp(-(x - c) ** 2 / (2 * s * s)) for c, s, h in bumps)


def test_identical_fields_pair_every_subtree():
    x = np.arange(60, dtype=float)
    f = _peaks(x, [(8, 3, 1.0), (30, 3, 0.7), (50, 3, 0.8)])
    a, b = _line_field(f), _line_field(f)
    dm = lmted_all_pairs(a, b)
    pairs = with_distances(region_matched_pairs(a, b), dm)
    spanning = {a.tree.root, *a.tree.children[a.tree.root]}
    assert {(p.a.root, p.b.root) for p in pairs} == {(r, r) for r in range(a.tree.n) if r not in spanning}
    assert all(p.lmted == 0.0 for p in pairs)
    with_root = {(p.a.root, p.b.root) for p in region_matched_pairs(a, b, include_spanning=True)}
    assert {(r, r) for r in range(a.tree.n)} <= with_root


def test_flattened_bump_jumps_where_it_is_contained():
    x = np.arange(90, dtype=float)
    base = _peaks(x, [(10, 4, 1.0), (40, 4, 0.9), (80, 4, 0.95)])
    a, b = _line_field(base + _peaks(x, [(25, 2, 0.5)])), _line_field(base)
    pairs = with_distances(region_matched_pairs(a, b), lmted_all_pairs(a, b))
    assert len(pairs) == 2
    bump = next(l for l in a.tree.leaves if int(a.tree.vertex[l]) == 25)
    for p in pairs:
        contains = a.tree.is_ancestor(p.a.root, bump)
        assert (p.lmted > 0) == contains
        if not contains:
            assert p.lmted == 0.0
    # reading from small to large regions, distances never decrease
    dists = [p.lmted for p in reversed(pairs)]
    assert dists == sorted(dists)


def test_disjoint_supports_have_no_pairs():
    x = np.arange(80, dtype=float)
    a = _line_field(_peaks(x, [(5, 2, 1.0), (15, 2, 0.8)]))
    b = _line_field(_peaks(x, [(60, 2, 1.0), (72, 2, 0.7)]))
    assert region_matched_pairs(a, b) == []


def test_relaxed_overlap_and_errors():
    x = np.arange(60, dtype=float)
    a = _line_field(_peaks(x, [(10, 3, 1.0), (40, 3, 0.8)]))
    b = _line_field(_peaks(x, [(11, 3, 1.0), (41, 3, 0.8)]))
    relaxed = region_matched_pairs(a, b, 0.5)
    assert relaxed and all(0.5 <= p.overlap <= 1.0 for p in relaxed)
    with pytest.raises(ValueError):
        region_matched_pairs(a, b, 0.0)
    c = SegmentedTree.from_field(ScalarGrid((6, 10), np.arange(60.0)), "split", 0.0)
    with pytest.raises(ValueError, match="dimension mismatch"):
        region_matched_pairs(a, c)


def test_region_csv_round_trip():
    x = np.arange(60, dtype=float)
    f = _peaks(x, [(8, 3, 1.0), (30, 3, 0.7), (50, 3, 0.8)])
    a, b = _line_field(f), _line_field(f * 0.9)
    dm = lmted_all_pairs(a, b, RefinementConfig(0.9, 0.9, 0.99))
    pairs = with_distances(region_matched_pairs(a, b), dm)
    rows = region_pairs_from_csv(region_pairs_to_csv(pairs))
    assert [(r["root_a"], r["root_b"], r["lmted"]) for r in rows] == [(p.a.root, p.b.root, p.lmted) for p in pairs]


def test_vertex_sets_partition_by_arcs():
    st_ = SegmentedTree.from_field(ScalarGrid((7, 7), np.random.default_rng(0).normal(size=49)), "split", 0.0)
    sets = subtree_vertex_sets(st_)
    assert sets[st_.tree.root].tolist() == list(range(49))
    for r in range(st_.tree.n):
        expected = sorted(v for v in range(49) if st_.tree.is_ancestor(r, int(st_.seg.arc[v])))
        assert sets[r].tolist() == expected

"""Follow three drifting blobs through thirty timesteps."""

from lmted.analysis import build_track_graph, top_tracks
from lmted.field_io import normalize_range
from lmted.local_distance import lmted_all_pairs
from lmted.merge_tree import SegmentedTree
from lmted.refinement import RefinementConfig
from lmted.synthetic import moving_blobs


def main():
    fields, centers = moving_blobs(64, 30, seed=0)
    steps = [SegmentedTree.from_field(normalize_range(f), "split", 0.008, f"t{k}") for k, f in enumerate(fields)]
    print(f"{len(steps)} timesteps, tree sizes {sorted({s.tree.n for s in steps})}")

    # distance matrices between consecutive steps prune the overlap graph
    dms = [lmted_all_pairs(a, b, RefinementConfig()) for a, b in zip(steps, steps[1:])]
    graph = build_track_graph(steps, dms, overlap_min=0.02, leaves_only=True)
    print(f"track graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges")

    for k, tr in enumerate(top_tracks(graph, min_len=10, min_weight=3.0)):
        first, last = graph.nodes[tr.nodes[0]], graph.nodes[tr.nodes[-1]]
        v0 = divmod(int(steps[first.t].tree.vertex[first.root]), 64)
        v1 = divmod(int(steps[last.t].tree.vertex[last.root]), 64)
        print(f"track {k}: length {tr.length}, weight {tr.weight:.2f}, peak {v0} at t={first.t} -> {v1} at t={last.t}")
    print("true blob paths:", [(tuple(map(round, a)), tuple(map(round, b))) for a, b in zip(centers[0], centers[-1])])


if __name__ == "__main__":
    main()

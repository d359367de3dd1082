"""Two fields share a pair of bump clusters placed in different surroundings.

The global tree distance sees the different surroundings; the local distance
between the cluster subtrees stays near zero.
"""

from lmted.edit_distance import mted
from lmted.field_io import normalize_range
from lmted.local_distance import local_tables
from lmted.merge_tree import SegmentedTree
from lmted.synthetic import bump_field

CLUSTER = [((0, 0), 3.0, 1.0), ((0, 8), 3.0, 0.9), ((7, 4), 3.0, 0.8)]


def place(cluster, at):
    return [((y + at[0], x + at[1]), s, h) for (y, x), s, h in cluster]


def cluster_root(st, centers):
    """Smallest subtree holding the leaves nearest to the given bump centres."""
    t, nx = st.tree, st.seg.dims[0]
    leaves = [x for x in t.leaves
              if any(abs(int(t.vertex[x]) // nx - cy) + abs(int(t.vertex[x]) % nx - cx) <= 2 for cy, cx in centers)]
    candidates = [r for r in range(t.n) if all(t.is_ancestor(r, x) for x in leaves)]
    return min(candidates, key=lambda r: len(t.subtree_nodes(r)))


def main():
    at_a, at_b = (20, 20), (56, 60)
    fa = bump_field((96, 96), place(CLUSTER, at_a) + [((40, 75), 3.0, 0.95), ((78, 78), 4.0, 0.5)])
    fb = bump_field((96, 96), place(CLUSTER, at_b) + [((82, 16), 3.0, 0.85), ((40, 30), 5.0, 0.4)])
    ta = SegmentedTree.from_field(normalize_range(fa), "split", 0.001)
    tb = SegmentedTree.from_field(normalize_range(fb), "split", 0.001)
    print(f"tree sizes: {ta.tree.n} and {tb.tree.n} nodes")
    print(f"global distance between the full trees: {mted(ta, tb):.4f}")

    ra = cluster_root(ta, [(y + at_a[0], x + at_a[1]) for (y, x), _, _ in CLUSTER])
    rb = cluster_root(tb, [(y + at_b[0], x + at_b[1]) for (y, x), _, _ in CLUSTER])
    tables = local_tables(ta, tb)
    print(f"cluster subtrees: node {ra} ({len(ta.tree.subtree_nodes(ra))} nodes) "
          f"vs node {rb} ({len(tb.tree.subtree_nodes(rb))} nodes)")
    print(f"local distance between the clusters: {tables.lmted(ra, rb):.2e}")


if __name__ == "__main__":
    main()

"""Find the four copies of one bump in a noisy field."""

import time

from lmted.analysis import symmetry_groups
from lmted.field_io import normalize_range
from lmted.local_distance import lmted_all_pairs
from lmted.merge_tree import SegmentedTree
from lmted.refinement import RefinementConfig
from lmted.synthetic import symmetric_bumps_field


def main():
    grid, centers = symmetric_bumps_field(128, noise=0.01, seed=0)
    start = time.perf_counter()
    st = SegmentedTree.from_field(normalize_range(grid), "split", 0.01)
    print(f"merge tree after 1% simplification: {st.tree.n} nodes")

    # self mode skips each subtree against itself and against its ancestors
    dm = lmted_all_pairs(st, st, RefinementConfig(self_mode=True))
    print(f"retained pairs: {int(dm.retained.sum())} of {dm.values.size}")

    for tau in (0.001, 0.01, 0.1):
        groups = symmetry_groups(dm, tau).roots()
        print(f"tau={tau}: {len(groups)} group(s), sizes {[len(g) for g in groups]}")

    group = symmetry_groups(dm, 0.01).roots()[0]
    for r in sorted(group):
        y, x = divmod(int(st.tree.vertex[r]), 128)
        print(f"  node {r:3d} peaks at ({y}, {x})")
    print(f"bump centres were {[(round(cy), round(cx)) for cy, cx in centers]}")
    print(f"elapsed {time.perf_counter() - start:.2f} s")


if __name__ == "__main__":
    main()

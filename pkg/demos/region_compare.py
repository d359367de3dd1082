"""Flatten one bump of a 1D signal and see which regions notice.

Subtrees covering the same samples in both signals are paired; only those
whose region contains the flattened bump get a nonzero distance.
"""

import numpy as np

from lmted.analysis import region_matched_pairs, with_distances
from lmted.field_io import ScalarGrid
from lmted.local_distance import lmted_all_pairs
from lmted.merge_tree import SegmentedTree


def peaks(x, bumps):
    return sum(h * np.exp(-(x - c) ** 2 / (2 * s * s)) for c, s, h in bumps)


def main():
    x = np.arange(90, dtype=float)
    base = peaks(x, [(10, 4, 1.0), (40, 4, 0.9), (80, 4, 0.95)])
    with_bump = SegmentedTree.from_field(ScalarGrid((90,), base + peaks(x, [(25, 2, 0.5)])), "split", 0.0)
    without = SegmentedTree.from_field(ScalarGrid((90,), base), "split", 0.0)

    pairs = with_distances(region_matched_pairs(with_bump, without), lmted_all_pairs(with_bump, without))
    bump = next(l for l in with_bump.tree.leaves if int(with_bump.tree.vertex[l]) == 25)
    for p in pairs:
        inside = with_bump.tree.is_ancestor(p.a.root, bump)
        print(f"region of {p.a.volume:2d} samples, holds the bump: {str(inside):5s}  lmted = {p.lmted:.4f}")


if __name__ == "__main__":
    main()

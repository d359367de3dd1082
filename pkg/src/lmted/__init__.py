"""Merge trees of scalar fields and local edit distances between their subtrees."""

from .cost_model import delete_cost, gamma_cap, insert_cost, relabel_cost, truncated_cost
from .edit_distance import dc_empty, dc_tables, min_cost_matching, mted
from .field_io import ScalarGrid, load_field, normalize_range, save_field, total_order
from .local_distance import DistanceMatrix, lmted_all_pairs, lmted_pair, local_tables
from .merge_tree import (
    MergeTree, SegmentedTree, SubtreeRef, build_merge_tree, pair_persistence, simplify,
    subtree_stats, unpaired_leaf,
)
from .refinement import RefinementConfig, knee_threshold, order_subtrees, prune_pairs

__version__ = "0.1.0"

__all__ = [
    "DistanceMatrix", "MergeTree", "RefinementConfig", "ScalarGrid", "SegmentedTree", "SubtreeRef",
    "build_merge_tree", "dc_empty", "dc_tables", "delete_cost", "gamma_cap", "insert_cost",
    "knee_threshold", "lmted_all_pairs", "lmted_pair", "load_field", "local_tables", "min_cost_matching",
    "mted", "normalize_range", "order_subtrees", "pair_persistence", "prune_pairs", "relabel_cost",
    "save_field", "simplify", "subtree_stats", "total_order", "truncated_cost", "unpaired_leaf",
]

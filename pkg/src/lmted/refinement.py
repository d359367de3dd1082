"""Subtree ordering, pruning of subtree comparisons, and dummy-rooted subtree views."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .merge_tree import MergeTree, PersistencePairing, SubtreeRef

FALLBACK_THRESHOLD = 0.5
CRITERIA = ("node_ratio", "volume_ratio", "pers_ratio")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RefinementConfig:
    """Ratio thresholds in [0, 1] for node count, volume and aggregate persistence.

    ``self_mode`` drops identical and nested pairs (comparing a field with
    itself). With ``use_knee`` the three thresholds are replaced by knees of
    the pair-count curves computed on the actual inputs.
    """

    node_ratio: float = FALLBACK_THRESHOLD
    volume_ratio: float = FALLBACK_THRESHOLD
    pers_ratio: float = FALLBACK_THRESHOLD
    use_knee: bool = False
    self_mode: bool = False

    def __post_init__(self):
        for name in CRITERIA:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")

    @classmethod
    def off(cls, self_mode: bool = False) -> "RefinementConfig":
        """Keep every pair (except self/nested ones in self mode)."""
        return cls(0.0, 0.0, 0.0, False, self_mode)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "RefinementConfig":
        unknown = set(d) - {"node_ratio", "volume_ratio", "pers_ratio", "use_knee", "self_mode"}
        if unknown:
            raise ConfigError(f"unknown refinement keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path) -> RefinementConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return RefinementConfig.from_json(doc)


def save_config(cfg: RefinementConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_json(), indent=1, sort_keys=True) + "\n")


def order_subtrees(refs: Sequence[SubtreeRef]) -> list[SubtreeRef]:
    """Largest subtrees first: descending by (size, volume, root id)."""
    return sorted(refs, key=lambda r: (r.size, r.volume, r.root), reverse=True)


def knee_threshold(curve: Sequence[float], ratios: Sequence[float] | None = None) -> float:
    """Ratio just after the sharpest drop of a pair-count curve.

    The drop must exceed twice the mean step decrease; otherwise (or for a
    single point) the fallback 0.5 is returned. ``ratios`` default to
    ``0.1, 0.2, ...``.
    """
    counts = [float(c) for c in curve]
    if ratios is None:
        ratios = [round(0.1 * (k + 1), 10) for k in range(len(counts))]
    if len(ratios) != len(counts):
        raise ValueError("curve and ratios differ in length")
    if len(counts) < 2:
        return FALLBACK_THRESHOLD
    drops = [a - b for a, b in zip(counts, counts[1:])]
    mean_drop = sum(drops) / len(drops)
    k = max(range(len(drops)), key=lambda s: (drops[s], -s))
    if drops[k] > 0 and drops[k] > 2.0 * mean_drop:
        return float(ratios[k + 1])
    return FALLBACK_THRESHOLD


def _ratio(a: float, b: float) -> float:
    hi = max(a, b)
    if hi <= 0:
        return 1.0
    return min(a, b) / hi


def pair_ratios(r1: SubtreeRef, r2: SubtreeRef) -> tuple[float, float, float]:
    return (
        _ratio(r1.size, r2.size),
        _ratio(r1.volume, r2.volume),
        _ratio(r1.agg_pers, r2.agg_pers),
    )


def _ratio_arrays(refs1, refs2):
    def arr(refs, attr):
        return np.array([float(getattr(r, attr)) for r in refs])

    out = []
    for attr in ("size", "volume", "agg_pers"):
        a, b = arr(refs1, attr)[None, :], arr(refs2, attr)[:, None]
        hi = np.maximum(a, b)
        lo = np.minimum(a, b)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(hi > 0, lo / np.where(hi > 0, hi, 1.0), 1.0)
        out.append(r)
    return out  # each shaped (len(refs2), len(refs1))


def _structural_mask(refs1, refs2, self_mode: bool) -> np.ndarray:
    mask = np.ones((len(refs2), len(refs1)), dtype=bool)
    if self_mode:
        for a, r2 in enumerate(refs2):
            for b, r1 in enumerate(refs1):
                if r1.contains(r2) or r2.contains(r1):
                    mask[a, b] = False
    return mask


def knee_curve(refs1, refs2, criterion: str, ratios: Sequence[float], self_mode: bool = False) -> list[int]:
    """Number of pairs passing ``criterion >= ratio`` for each candidate ratio."""
    idx = CRITERIA.index(criterion)
    r = _ratio_arrays(refs1, refs2)[idx]
    base = _structural_mask(refs1, refs2, self_mode)
    return [int(np.count_nonzero(base & (r >= x))) for x in ratios]


KNEE_GRID = tuple(round(0.1 * k, 10) for k in range(1, 10))


def resolve_config(refs1, refs2, cfg: RefinementConfig) -> RefinementConfig:
    """Replace thresholds by curve knees when ``use_knee`` is set."""
    if not cfg.use_knee:
        return cfg
    vals = {
        name: knee_threshold(knee_curve(refs1, refs2, name, KNEE_GRID, cfg.self_mode), KNEE_GRID)
        for name in CRITERIA
    }
    return RefinementConfig(vals["node_ratio"], vals["volume_ratio"], vals["pers_ratio"], False, cfg.self_mode)


def retained_mask(refs1: Sequence[SubtreeRef], refs2: Sequence[SubtreeRef], cfg: RefinementConfig) -> np.ndarray:
    """Boolean matrix, rows follow ``refs2`` and columns ``refs1``."""
    cfg = resolve_config(refs1, refs2, cfg)
    size_r, vol_r, pers_r = _ratio_arrays(refs1, refs2)
    mask = _structural_mask(refs1, refs2, cfg.self_mode)
    mask &= size_r >= cfg.node_ratio
    mask &= vol_r >= cfg.volume_ratio
    mask &= pers_r >= cfg.pers_ratio
    return mask


def prune_pairs(subtrees1: Sequence[SubtreeRef], subtrees2: Sequence[SubtreeRef],
                config: RefinementConfig) -> set[tuple[int, int]]:
    """Retained ``(root1, root2)`` pairs."""
    mask = retained_mask(subtrees1, subtrees2, config)
    rows, cols = np.nonzero(mask)
    return {(subtrees1[c].root, subtrees2[r].root) for r, c in zip(rows.tolist(), cols.tolist())}


@dataclass
class CanonicalSubtree:
    """``T[root]`` topped by a dummy node at the parent's value.

    Node ids are local: ``nodes[k]`` is the original id of local node ``k``,
    the dummy is the last local node (absent for the whole tree).
    """

    tree: MergeTree
    pairing: PersistencePairing
    nodes: list[int]
    has_dummy: bool


def canonicalize_subtree(tree: MergeTree, pairing: PersistencePairing | None, root: int) -> CanonicalSubtree:
    from .merge_tree import pair_persistence

    if root == tree.root:
        p = pairing if pairing is not None else pair_persistence(tree)
        return CanonicalSubtree(tree, p, list(range(tree.n)), False)
    nodes = sorted(tree.subtree_nodes(root))
    local = {old: k for k, old in enumerate(nodes)}
    dummy = len(nodes)
    parents = [local[int(tree.parent[x])] if x != root else dummy for x in nodes] + [-1]
    values = [float(tree.value[x]) for x in nodes] + [float(tree.value[tree.parent[root]])]
    vertices = [int(tree.vertex[x]) for x in nodes] + [-1]
    children = [[local[c] for c in tree.children[x]] for x in nodes] + [[local[root]]]
    view = MergeTree(tree.variant, vertices, values, parents, children, dummy,
                     meta={**tree.meta, "subtree_of": int(root)})
    return CanonicalSubtree(view, pair_persistence(view), nodes, True)

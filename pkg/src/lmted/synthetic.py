"""Random trees and synthetic scalar fields used by tests and demos."""

from __future__ import annotations

import numpy as np

from .field_io import ScalarGrid
from .merge_tree import MergeTree


def random_merge_tree(n_leaves: int, rng: np.random.Generator, variant: str = "split") -> MergeTree:
    """Random binary merge tree with ``2 * n_leaves`` nodes and distinct values.

    Leaves get values in (0.5, 1]; components are merged pairwise at random
    with the saddle placed below both merging components, then a root is
    added below everything. Join trees are the negated construction.
    """
    if n_leaves < 1:
        raise ValueError("need at least one leaf")
    values = list(rng.uniform(0.5, 1.0, size=n_leaves))
    parents = [-1] * n_leaves
    comps = list(range(n_leaves))
    while len(comps) > 1:
        a, b = sorted(rng.choice(len(comps), size=2, replace=False).tolist())
        ca, cb = comps[a], comps[b]
        top = min(values[ca], values[cb])
        sid = len(values)
        values.append(top * rng.uniform(0.3, 0.999))
        parents.append(-1)
        parents[ca] = parents[cb] = sid
        comps = [c for k, c in enumerate(comps) if k not in (a, b)] + [sid]
    rid = len(values)
    values.append(min(values) * rng.uniform(0.0, 0.9))
    parents.append(-1)
    parents[comps[0]] = rid
    vals = np.array(values)
    if variant == "join":
        vals = -vals
    return MergeTree.from_parents(parents, vals, variant)


def random_rooted_tree(n: int, rng: np.random.Generator) -> tuple[list[int], list[tuple[float, float]]]:
    """Arbitrary rooted tree (parent list, root 0) with random persistence points."""
    parents = [-1] + [int(rng.integers(0, k)) for k in range(1, n)]
    pts = []
    for _ in range(n):
        b = float(rng.uniform(0, 1))
        pts.append((b, b + float(rng.uniform(0, 1))))
    return parents, pts


def gaussian(shape, center, sigma: float, height: float = 1.0) -> np.ndarray:
    """Isotropic Gaussian sampled on a grid indexed ``[y, x]`` (or ``[z, y, x]``)."""
    grids = np.meshgrid(*[np.arange(s, dtype=np.float64) for s in shape], indexing="ij")
    r2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    return height * np.exp(-r2 / (2.0 * sigma ** 2))


def bump_field(shape, bumps, base=None) -> ScalarGrid:
    """Sum of Gaussian bumps given as ``(center, sigma, height)`` tuples."""
    arr = np.zeros(shape) if base is None else np.array(base, dtype=np.float64)
    for center, sigma, height in bumps:
        arr = arr + gaussian(shape, center, sigma, height)
    return ScalarGrid.from_array(arr)


def symmetric_bumps_field(n: int = 128, noise: float = 0.01, seed: int = 0) -> tuple[ScalarGrid, list[tuple[float, float]]]:
    """Four identical bumps on a ring over a broad dome, plus uniform noise.

    The configuration is invariant under quarter turns of the grid (all
    centers sit on the half-integer grid center's rotation orbit). ``noise``
    is the peak-to-peak amplitude relative to the bump height. Returns the
    field and the bump centers as ``(y, x)``.
    """
    c = (n - 1) / 2.0
    radius = 0.3125 * n
    centers = [(c - radius, c), (c, c + radius), (c + radius, c), (c, c - radius)]
    arr = gaussian((n, n), (c, c), 0.25 * n, 0.5)
    for ctr in centers:
        arr = arr + gaussian((n, n), ctr, 0.04 * n, 1.0)
    rng = np.random.default_rng(seed)
    arr = arr + rng.uniform(-noise / 2, noise / 2, size=arr.shape)
    return ScalarGrid.from_array(arr), centers


def moving_blobs(n: int = 64, steps: int = 30, seed: int = 0) -> tuple[list[ScalarGrid], list[list[tuple[float, float]]]]:
    """Three Gaussian blobs translating one grid cell per step.

    Returns the fields and, per step, the blob centers ``(y, x)``.
    """
    starts = [(12.0, 8.0), (32.0, 18.0), (52.0, 4.0)]
    heights = [1.0, 0.9, 0.8]
    rng = np.random.default_rng(seed)
    fields, centers = [], []
    for t in range(steps):
        cs = [(y, x + t) for y, x in starts]
        arr = np.zeros((n, n))
        for ctr, h in zip(cs, heights):
            arr += gaussian((n, n), ctr, 3.0, h)
        arr += rng.uniform(0, 1e-3, size=arr.shape)
        fields.append(ScalarGrid.from_array(arr))
        centers.append(cs)
    return fields, centers

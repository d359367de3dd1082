"""Scalar fields on regular grids: loading, saving, normalization, vertex order.

Two on-disk formats are supported.

ASCII::

    dims 4 3
    0.0 1.0 2.0 3.0
    ...

The first line names the extent of every axis (1 to 3 of them), followed by
``prod(dims)`` whitespace separated numbers in row-major order with x varying
fastest.

Raw: ``<name>.raw`` holds little-endian IEEE-754 samples, ``<name>.json`` holds
``{"dims": [...], "dtype": "f32" | "f64", "endianness": "little"}``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMATS = ("ascii", "raw_f32", "raw_f64")

_RAW_DTYPES = {"f32": "<f4", "f64": "<f8"}


class FieldFormatError(ValueError):
    """Raised when a field file is malformed or fails validation."""


@dataclass(frozen=True)
class ScalarGrid:
    """Regularly sampled scalar field.

    ``values`` is flat, row-major with x fastest, so vertex ``(x, y, z)`` sits
    at ``x + nx * (y + ny * z)``.
    """

    dims: tuple[int, ...]
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not 1 <= len(dims) <= 3:
            raise FieldFormatError(f"expected 1 to 3 axes, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise FieldFormatError(f"every axis extent must be >= 1, got {dims}")
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).ravel())
        if values.size != int(np.prod(dims)):
            raise FieldFormatError(
                f"dimension mismatch: dims {list(dims)} need {int(np.prod(dims))} "
                f"samples, got {values.size}"
            )
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise FieldFormatError(f"non-finite value at index {int(bad[0])}")
        values.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def as_array(self) -> np.ndarray:
        """Values reshaped to numpy axis order ``(nz, ny, nx)`` (x last)."""
        return self.values.reshape(self.dims[::-1])

    @classmethod
    def from_array(cls, array, meta: dict | None = None) -> "ScalarGrid":
        """Build from a numpy array indexed ``[z, y, x]`` (or ``[y, x]``, ``[x]``)."""
        array = np.asarray(array, dtype=np.float64)
        return cls(tuple(array.shape[::-1]), array.ravel(), dict(meta or {}))

    def with_values(self, values, **meta) -> "ScalarGrid":
        return ScalarGrid(self.dims, values, {**self.meta, **meta})


def _parse_ascii(text: str, source: str) -> ScalarGrid:
    lines = text.splitlines()
    if not lines:
        raise FieldFormatError(f"{source}: empty file")
    header = lines[0].split()
    if not header or header[0] != "dims" or not 2 <= len(header) <= 4:
        raise FieldFormatError(f"{source}: first line must be 'dims n1 [n2 [n3]]'")
    try:
        dims = tuple(int(tok) for tok in header[1:])
        values = np.array(" ".join(lines[1:]).split(), dtype=np.float64)
    except ValueError as exc:
        raise FieldFormatError(f"{source}: {exc}") from None
    return ScalarGrid(dims, values, {"source": source})


def load_field(path, format: str = "ascii") -> ScalarGrid:
    """Read a field from disk.

    ``format`` is one of ``ascii``, ``raw_f32``, ``raw_f64``. For the raw
    formats ``path`` may name either the ``.raw`` payload or the ``.json``
    sidecar. The sidecar dtype must agree with the requested format.
    """
    if format not in FORMATS:
        raise FieldFormatError(f"unknown format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    if format == "ascii":
        return _parse_ascii(path.read_text(), str(path))

    raw_path = path.with_suffix(".raw")
    side_path = path.with_suffix(".json")
    sidecar = json.loads(side_path.read_text())
    dims = tuple(int(d) for d in sidecar["dims"])
    dtype = sidecar.get("dtype", format[4:])
    if dtype != format[4:]:
        raise FieldFormatError(f"{side_path}: dtype {dtype!r} does not match format {format!r}")
    if sidecar.get("endianness", "little") != "little":
        raise FieldFormatError(f"{side_path}: only little-endian payloads are supported")
    payload = np.fromfile(raw_path, dtype=_RAW_DTYPES[dtype])
    return ScalarGrid(dims, payload, {"source": str(raw_path)})


def save_field(g: ScalarGrid, path, format: str = "ascii") -> Path:
    """Write ``g`` in the given format; returns the path of the payload file.

    ASCII output uses ``repr`` of each float so the round trip is exact.
    """
    if format not in FORMATS:
        raise FieldFormatError(f"unknown format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    if format == "ascii":
        nx = g.dims[0]
        rows = [" ".join(repr(float(v)) for v in g.values[k:k + nx]) for k in range(0, g.size, nx)]
        path.write_text("dims " + " ".join(map(str, g.dims)) + "\n" + "\n".join(rows) + "\n")
        return path
    dtype = format[4:]
    raw_path = path.with_suffix(".raw")
    g.values.astype(_RAW_DTYPES[dtype]).tofile(raw_path)
    sidecar = {"dims": list(g.dims), "dtype": dtype, "endianness": "little"}
    path.with_suffix(".json").write_text(json.dumps(sidecar) + "\n")
    return raw_path


def guess_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".raw", ".json"):
        side = Path(path).with_suffix(".json")
        if side.exists():
            return "raw_" + json.loads(side.read_text()).get("dtype", "f32")
        return "raw_f32"
    return "ascii"


def normalize_range(g: ScalarGrid) -> ScalarGrid:
    """Affinely map values onto [0, 1]; constant fields become all zeros."""
    lo, hi = float(g.values.min()), float(g.values.max())
    if hi == lo:
        return g.with_values(np.zeros_like(g.values), normalized=True)
    out = (g.values - lo) / (hi - lo)
    # exact endpoints, so renormalizing is a no-op
    out[g.values == lo] = 0.0
    out[g.values == hi] = 1.0
    return g.with_values(out, normalized=True)


def total_order(g: ScalarGrid, direction: str = "ascending") -> np.ndarray:
    """Permutation of vertex ids sorted by ``(value, index)``.

    ``descending`` reverses the value order only; equal values keep ascending
    vertex index, which is the symbolic perturbation used for tie breaking.
    """
    if direction == "ascending":
        keys = g.values
    elif direction == "descending":
        keys = -g.values
    else:
        raise ValueError(f"direction must be 'ascending' or 'descending', got {direction!r}")
    return np.argsort(keys, kind="stable")


def vertex_ranks(order: np.ndarray) -> np.ndarray:
    """Inverse permutation: ``ranks[v]`` is the position of ``v`` in ``order``."""
    ranks = np.empty_like(order)
    ranks[order] = np.arange(order.size)
    return ranks


def freudenthal_offsets(ndim: int) -> list[tuple[int, ...]]:
    """Neighbor offsets of the Freudenthal triangulation (2, 6 or 14 neighbors)."""
    pos = [o for o in itertools.product((0, 1), repeat=ndim) if any(o)]
    return pos + [tuple(-c for c in o) for o in pos]


def neighbor_lists(dims) -> list[list[int]]:
    """Per-vertex neighbor ids under Freudenthal connectivity."""
    dims = tuple(dims)
    shape = dims[::-1]
    n = int(np.prod(dims))
    coords = np.unravel_index(np.arange(n), shape)  # (z, y, x) order
    result: list[list[int]] = [[] for _ in range(n)]
    cols = []
    for off in freudenthal_offsets(len(dims)):
        off_np = off[::-1]
        target = [c + o for c, o in zip(coords, off_np)]
        ok = np.ones(n, dtype=bool)
        for t, s in zip(target, shape):
            ok &= (t >= 0) & (t < s)
        src = np.flatnonzero(ok)
        dst = np.ravel_multi_index(tuple(t[ok] for t in target), shape)
        cols.append((src, dst))
    for src, dst in cols:
        for a, b in zip(src.tolist(), dst.tolist()):
            result[a].append(b)
    for r in result:
        r.sort()
    return result

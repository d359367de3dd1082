"""Command-line interface: ``lmted <command> ...``.

Every command validates its inputs before computing, writes its outputs
atomically, and drops a ``<output>.manifest.json`` next to the primary output
recording the command, resolved configuration, input hashes, version and wall
time.

Exit codes: 1 input/output error, 2 invalid data, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .analysis import (
    DEFAULT_MIN_LEN, DEFAULT_MIN_WEIGHT, DEFAULT_OVERLAP_MIN, DEFAULT_TAU, build_track_graph,
    query_track, region_matched_pairs, region_pairs_to_csv, symmetry_groups, top_tracks, with_distances,
)
from .edit_distance import dc_tables, trace_to_json
from .field_io import FORMATS, FieldFormatError, ScalarGrid, guess_format, load_field, normalize_range
from .local_distance import lmted_all_pairs
from .merge_tree import VARIANTS, SegmentedTree, tree_to_json
from .refinement import ConfigError, RefinementConfig, load_config

EXIT_IO, EXIT_DATA, EXIT_CONFIG = 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# inputs


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_files(path: str, fmt: str) -> list[Path]:
    p = Path(path)
    if fmt.startswith("raw"):
        return [p.with_suffix(".raw"), p.with_suffix(".json")]
    return [p]


def _read_field(path: str, args) -> ScalarGrid:
    fmt = args.format or guess_format(path)
    try:
        g = load_field(path, fmt)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    except (FieldFormatError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_DATA, f"{path}: {exc}") from None
    for f in _input_files(path, fmt):
        args._hashes[str(f)] = _sha256(f)
    return normalize_range(g) if args.normalize else g


def _segmented(g: ScalarGrid, args, label: str) -> SegmentedTree:
    st = SegmentedTree.from_field(g, args.variant, args.simplify, label)
    st.tree.meta["normalized"] = bool(args.normalize)
    return st


def _refinement(args, self_mode: bool) -> RefinementConfig:
    try:
        cfg = load_config(args.refine).to_json() if args.refine else {}
    except FileNotFoundError:
        raise CliError(EXIT_IO, f"cannot read refinement config {args.refine}") from None
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    if args.no_refine:
        cfg.update(node_ratio=0.0, volume_ratio=0.0, pers_ratio=0.0, use_knee=False)
    for key in ("node_ratio", "volume_ratio", "pers_ratio"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.knee:
        cfg["use_knee"] = True
    cfg["self_mode"] = bool(args.self_mode) if args.self_mode is not None else self_mode
    try:
        return RefinementConfig.from_json(cfg)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


# outputs


class _Outputs:
    """Collects output files and writes them only once everything succeeded."""

    def __init__(self):
        self.files: list[tuple[Path, bytes]] = []

    def add(self, path, data) -> None:
        if isinstance(data, str):
            data = data.encode()
        self.files.append((Path(path), data))

    def add_json(self, path, doc) -> None:
        self.add(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")

    def commit(self) -> None:
        for path, data in self.files:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


def _manifest(args, primary: Path, started: float) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if not k.startswith("_") and k != "func"}
    return {
        "command": args.command,
        "argv": args._argv,
        "config": config,
        "inputs": dict(sorted(args._hashes.items())),
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - started, 6),
        "output": str(primary),
    }


def _meta(args) -> dict:
    return {
        "normalized": bool(args.normalize),
        "variant": args.variant,
        "simplify": args.simplify,
        "connectivity": "freudenthal",
    }


# commands


def cmd_tree(args, out: _Outputs) -> Path:
    st = _segmented(_read_field(args.field, args), args, "T")
    prefix = Path(args.output)
    doc = tree_to_json(st.tree, st.pairing)
    doc["meta"] = {**doc["meta"], **_meta(args)}
    tree_path = prefix.with_name(prefix.name + ".tree.json")
    out.add_json(tree_path, doc)
    nx = st.seg.dims[0]
    ids = st.seg.arc.tolist()
    rows = [" ".join(map(str, ids[k:k + nx])) for k in range(0, len(ids), nx)]
    seg_text = "dims " + " ".join(map(str, st.seg.dims)) + "\n" + "\n".join(rows) + "\n"
    out.add(prefix.with_name(prefix.name + ".seg.txt"), seg_text)
    print(f"{st.tree.n} nodes, {len(st.tree.leaves)} leaves")
    return tree_path


def cmd_mted(args, out: _Outputs) -> Path:
    a = _segmented(_read_field(args.field_a, args), args, "T1")
    b = _segmented(_read_field(args.field_b, args), args, "T2")
    tables = dc_tables(a, b)
    value = tables.dc_tree(a.tree.root, b.tree.root)
    doc = {"mted": value, "cost_model": "wasserstein_linf", "n1": a.tree.n, "n2": b.tree.n, **_meta(args)}
    out.add_json(args.output, doc)
    if args.trace:
        out.add_json(args.trace, trace_to_json(tables))
    print(repr(value))
    return Path(args.output)


def _matrix_outputs(dm, args, out: _Outputs) -> None:
    path = Path(args.output)
    tmp = tempfile.TemporaryDirectory()
    try:
        tpath = Path(tmp.name) / "m.csv"
        dm.to_csv(tpath)
        out.add(path, tpath.read_bytes())
        out.add(path.with_suffix(".json"), tpath.with_suffix(".json").read_bytes())
        if getattr(args, "heatmap", None):
            hp = Path(tmp.name) / "h.ppm"
            dm.to_ppm(hp, args.vmin, args.vmax, args.cell)
            out.add(args.heatmap, hp.read_bytes())
    finally:
        tmp.cleanup()


def cmd_lmted(args, out: _Outputs) -> Path:
    cfg = _refinement(args, self_mode=False)
    a = _segmented(_read_field(args.field_a, args), args, "T1")
    b = _segmented(_read_field(args.field_b, args), args, "T2")
    if args.heatmap and args.vmax <= args.vmin:
        raise CliError(EXIT_CONFIG, "--vmax must exceed --vmin")
    dm = lmted_all_pairs(a, b, cfg, meta=_meta(args))
    _matrix_outputs(dm, args, out)
    print(f"{dm.values.shape[0]}x{dm.values.shape[1]} matrix, {int(dm.retained.sum())} retained pairs")
    return Path(args.output)


def cmd_symmetry(args, out: _Outputs) -> Path:
    if args.tau < 0:
        raise CliError(EXIT_CONFIG, "--tau must be >= 0")
    cfg = _refinement(args, self_mode=True)
    st = _segmented(_read_field(args.field, args), args, "T")
    dm = lmted_all_pairs(st, st, cfg, meta=_meta(args))
    groups = symmetry_groups(dm, args.tau)
    doc = {**groups.to_json(), **_meta(args), "refinement": dm.meta["refinement"]}
    out.add_json(args.output, doc)
    if args.matrix:
        sub = argparse.Namespace(output=args.matrix, heatmap=None)
        _matrix_outputs(dm, sub, out)
    print(f"{len(groups.groups)} group(s)")
    return Path(args.output)


def _pair_matrix(job):
    a, b, cfg = job
    return lmted_all_pairs(a, b, cfg)


def cmd_track(args, out: _Outputs) -> Path:
    paths = sorted(glob.glob(args.fields))
    if len(paths) < 2:
        raise CliError(EXIT_IO, f"pattern {args.fields!r} matched {len(paths)} file(s); need at least 2")
    cfg = _refinement(args, self_mode=False)
    if not 0.0 <= args.overlap_min <= 1.0:
        raise CliError(EXIT_CONFIG, "--overlap-min must lie in [0, 1]")
    query = None
    if args.query:
        try:
            t_s, r_s = args.query.split(":")
            query = (int(t_s), int(r_s))
        except ValueError:
            raise CliError(EXIT_CONFIG, "--query expects t:root") from None
    steps = [_segmented(_read_field(p, args), args, f"t{k}") for k, p in enumerate(paths)]
    dims = {tuple(st.seg.dims) for st in steps}
    if len(dims) != 1:
        raise CliError(EXIT_DATA, f"timesteps have different dimensions: {sorted(dims)}")
    jobs = [(steps[k], steps[k + 1], cfg) for k in range(len(steps) - 1)]
    threads = max(1, args.threads or 1)
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            dms = list(pool.map(_pair_matrix, jobs))
    else:
        dms = [_pair_matrix(j) for j in jobs]
    g = build_track_graph(steps, dms, args.overlap_min, args.max_volume_fraction,
                          args.include_root, args.leaves_only)
    if query is not None:
        t, root = query
        if not 0 <= t < len(steps):
            raise CliError(EXIT_CONFIG, f"query timestep {t} out of range")
        self_dm = lmted_all_pairs(steps[t], steps[t], RefinementConfig.off(self_mode=True))
        try:
            g.tracks = query_track(g, t, root, self_dm, args.tau_sym)
        except KeyError as exc:
            raise CliError(EXIT_CONFIG, str(exc.args[0])) from None
    else:
        g.tracks = top_tracks(g, args.order, args.min_len, args.min_weight, args.top_k)
    g.meta.update(_meta(args), timesteps=[str(p) for p in paths], min_len=args.min_len,
                  min_weight=args.min_weight, order=args.order)
    out.add_json(args.output, g.to_json())
    print(f"{len(g.nodes)} nodes, {len(g.edges)} edges, {len(g.tracks)} track(s)")
    return Path(args.output)


def cmd_region_compare(args, out: _Outputs) -> Path:
    cfg = _refinement(args, self_mode=False)
    a = _segmented(_read_field(args.field_a, args), args, "A")
    b = _segmented(_read_field(args.field_b, args), args, "B")
    if a.seg.dims != b.seg.dims:
        raise CliError(EXIT_DATA, f"dimension mismatch: {a.seg.dims} vs {b.seg.dims}")
    if not 0.0 < args.min_overlap <= 1.0:
        raise CliError(EXIT_CONFIG, "--min-overlap must lie in (0, 1]")
    pairs = region_matched_pairs(a, b, args.min_overlap, args.include_spanning)
    dm = lmted_all_pairs(a, b, cfg)
    out.add(args.output, region_pairs_to_csv(with_distances(pairs, dm)))
    print(f"{len(pairs)} matched region pair(s)")
    return Path(args.output)


# parser


def _shared(p: argparse.ArgumentParser, refine: bool = True) -> None:
    p.add_argument("--variant", choices=VARIANTS, default="split", help="merge tree type (default: split)")
    p.add_argument("--simplify", type=float, default=0.0, metavar="FRAC",
                   help="persistence simplification threshold as a fraction of the value range")
    p.add_argument("--normalize", dest="normalize", action="store_true", default=True,
                   help="rescale every field to [0, 1] before building trees (default)")
    p.add_argument("--no-normalize", dest="normalize", action="store_false", help="use raw values")
    p.add_argument("--format", choices=FORMATS, default=None, help="input format (guessed from suffix by default)")
    p.add_argument("--threads", type=int, default=os.cpu_count(), help="worker processes (default: CPU count)")
    if refine:
        g = p.add_argument_group("comparison refinement")
        g.add_argument("--refine", metavar="JSON", help="refinement config file")
        g.add_argument("--node-ratio", type=float, default=None)
        g.add_argument("--volume-ratio", type=float, default=None)
        g.add_argument("--pers-ratio", type=float, default=None)
        g.add_argument("--knee", action="store_true", help="pick thresholds at the knee of the pair-count curves")
        g.add_argument("--no-refine", action="store_true", help="keep every subtree pair")
        g.add_argument("--self-mode", dest="self_mode", action="store_true", default=None,
                       help="drop identical and nested pairs")
        g.add_argument("--no-self-mode", dest="self_mode", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lmted", description="Merge trees and local merge tree edit distances.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tree", help="build a merge tree and its segmentation")
    p.add_argument("field")
    p.add_argument("-o", "--output", required=True, metavar="PREFIX",
                   help="writes PREFIX.tree.json and PREFIX.seg.txt")
    _shared(p, refine=False)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("mted", help="global edit distance between the trees of two fields")
    p.add_argument("field_a")
    p.add_argument("field_b")
    p.add_argument("-o", "--output", required=True, metavar="JSON")
    p.add_argument("--trace", metavar="JSON", help="also write the per-cell branch trace")
    _shared(p, refine=False)
    p.set_defaults(func=cmd_mted)

    p = sub.add_parser("lmted", help="local distances between all subtree pairs")
    p.add_argument("field_a")
    p.add_argument("field_b")
    p.add_argument("-o", "--output", required=True, metavar="CSV", help="matrix CSV (+ .json metadata)")
    p.add_argument("--heatmap", metavar="PPM")
    p.add_argument("--vmin", type=float, default=0.0)
    p.add_argument("--vmax", type=float, default=0.1)
    p.add_argument("--cell", type=int, default=4, help="heatmap pixels per matrix entry")
    _shared(p)
    p.set_defaults(func=cmd_lmted)

    p = sub.add_parser("symmetry", help="groups of mutually similar subtrees within one field")
    p.add_argument("field")
    p.add_argument("-o", "--output", required=True, metavar="JSON")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--matrix", metavar="CSV", help="also write the self-comparison matrix")
    _shared(p)
    p.set_defaults(func=cmd_symmetry)

    p = sub.add_parser("track", help="overlap-based feature tracks over a time series")
    p.add_argument("fields", help="glob pattern; timesteps follow lexicographic file order")
    p.add_argument("-o", "--output", required=True, metavar="JSON")
    p.add_argument("--overlap-min", type=float, default=DEFAULT_OVERLAP_MIN)
    p.add_argument("--min-len", type=int, default=DEFAULT_MIN_LEN)
    p.add_argument("--min-weight", type=float, default=DEFAULT_MIN_WEIGHT)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--order", choices=("weight", "length"), default="weight")
    p.add_argument("--query", metavar="T:ROOT", help="track one subtree and its symmetric partners")
    p.add_argument("--tau-sym", type=float, default=0.0)
    p.add_argument("--max-volume-fraction", type=float, default=1.0)
    p.add_argument("--include-root", action="store_true")
    p.add_argument("--leaves-only", action="store_true", help="track single-extremum subtrees only")
    _shared(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("region-compare", help="compare subtrees covering identical regions of two fields")
    p.add_argument("field_a")
    p.add_argument("field_b")
    p.add_argument("-o", "--output", required=True, metavar="CSV")
    p.add_argument("--min-overlap", type=float, default=1.0)
    p.add_argument("--include-spanning", action="store_true",
                   help="also report the root and its child, which cover the whole domain")
    _shared(p)
    p.set_defaults(func=cmd_region_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    args._hashes = {}
    started = time.perf_counter()
    if not 0.0 <= args.simplify <= 1.0:
        print("lmted: error: --simplify must lie in [0, 1]", file=sys.stderr)
        return EXIT_CONFIG
    out = _Outputs()
    try:
        primary = args.func(args, out)
        manifest = _manifest(args, primary, started)
        out.add_json(primary.with_name(primary.name + ".manifest.json"), manifest)
        out.commit()
    except CliError as exc:
        print(f"lmted: error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"lmted: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"lmted: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"lmted: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())

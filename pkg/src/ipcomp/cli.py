"""Command line interface.

Every command prints a single-line JSON summary on standard output; anything
meant for people goes to standard error.  Failures exit non-zero and print
``{"error": ..., "message": ...}``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .archive import RetrievalPlan
from .errors import InfeasibleRequestError, IPCompError
from .grid import FieldGrid
from .metrics import bitrate, compression_ratio, metrics
from .pipeline import Archive, RetrievalSession, compress, reconstruct, refine
from .planner import plan_for_error, plan_for_size

EXIT_INFEASIBLE = 2
EXIT_ERROR = 1


def _emit(payload: dict) -> None:
    print(json.dumps(payload, separators=(",", ":"), allow_nan=True))


def _add_fidelity(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--abs-error", type=float, help="maximum absolute point-wise error")
    group.add_argument("--rel-error", type=float, help="maximum error relative to the value range")
    group.add_argument("--bitrate", type=float, help="bits loaded per value")
    group.add_argument("--bytes", type=float, help="payload bytes loaded")


def _plan(archive: Archive, args) -> RetrievalPlan:
    model = archive.error_model()
    h = archive.header
    for name in ("abs_error", "rel_error", "bitrate", "bytes"):
        value = getattr(args, name)
        if value is not None:
            break
    if not value > 0:
        raise ValueError(f"--{name.replace('_', '-')} must be positive")
    if name == "abs_error":
        return plan_for_error(model, value)
    if name == "rel_error":
        return plan_for_error(model, value * h.value_range)
    if name == "bitrate":
        return plan_for_size(model, value * h.size / 8)
    return plan_for_size(model, value)


def cmd_compress(args) -> dict:
    path = Path(args.input)
    grid = FieldGrid.frombytes(path.read_bytes(), args.dims, args.type)
    if args.rel_error is not None:
        finite = grid.values[np.isfinite(grid.values)]
        value_range = float(finite.max() - finite.min()) if finite.size else 0.0
        eb = args.rel_error * value_range
        if not eb > 0:
            raise ValueError("relative error bound resolves to zero on a constant field")
    else:
        eb = args.abs_error
    data = compress(grid, eb, args.interp, args.lp)
    Path(args.output).write_bytes(data)
    original = grid.values.nbytes
    return {
        "original_bytes": original,
        "compressed_bytes": len(data),
        "cr": compression_ratio(original, len(data)),
        "bitrate": bitrate(len(data), grid.size),
        "eb": eb,
    }


def _summary(archive: Archive, plan: RetrievalPlan, loaded: int) -> dict:
    return {
        "bytes_loaded": loaded,
        "bound": plan.bound,
        "bitrate": bitrate(loaded, archive.header.size),
        "planes": list(plan.loaded),
    }


def cmd_retrieve(args) -> dict:
    with Archive.open(args.input) as archive:
        plan = _plan(archive, args)
        grid, session = reconstruct(archive, plan)
        Path(args.output).write_bytes(grid.tobytes())
        if args.session:
            Path(args.session).write_bytes(session.to_bytes())
        return _summary(archive, plan, session.bytes_loaded)


def cmd_refine(args) -> dict:
    with Archive.open(args.input) as archive:
        h = archive.header
        session = RetrievalSession.from_bytes(Path(args.session).read_bytes())
        previous = FieldGrid.frombytes(Path(args.prev).read_bytes(), h.dims, h.scalar_kind)
        plan = _plan(archive, args)
        grid, updated = refine(archive, session, previous, plan)
        Path(args.output).write_bytes(grid.tobytes())
        Path(args.session).write_bytes(updated.to_bytes())
        summary = _summary(archive, plan, updated.bytes_loaded)
        summary["incremental_bytes"] = updated.bytes_loaded - session.bytes_loaded
        return summary


def cmd_inspect(args) -> dict:
    with Archive.open(args.input) as archive:
        h = archive.header
        levels = []
        for level in range(h.levels, 0, -1):
            rec = archive.index.records[level]
            levels.append({
                "level": level,
                "count": rec.count,
                "outliers": rec.outliers[2],
                "delta": [float(v) for v in rec.delta],
                "plane_bytes": [int(v) for v in rec.plane_lengths()],
            })
        info = {
            "dims": list(h.dims),
            "scalar_kind": h.scalar_kind,
            "interp": h.interp,
            "eb": h.eb,
            "levels": h.levels,
            "progressive_levels": h.progressive_levels,
            "anchor_cap": h.anchor_cap,
            "value_min": h.value_min,
            "value_max": h.value_max,
            "payload_bytes": h.payload_length,
            "level_records": levels,
        }
    print(f"dims {h.dims} {h.scalar_kind} {h.interp}, eb {h.eb:g}, "
          f"{h.levels} levels ({h.progressive_levels} progressive)", file=sys.stderr)
    for entry in levels:
        print(f"  level {entry['level']}: {entry['count']} points, "
              f"{sum(entry['plane_bytes'])} plane bytes, {entry['outliers']} outliers",
              file=sys.stderr)
    return info


def cmd_metrics(args) -> dict:
    original = FieldGrid.frombytes(Path(args.original).read_bytes(), args.dims, args.type)
    other = FieldGrid.frombytes(Path(args.reconstructed).read_bytes(), args.dims, args.type)
    return metrics(original, other)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipcomp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a raw field")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("-d", "--dims", type=int, nargs="+", required=True)
    p.add_argument("-t", "--type", choices=("f32", "f64"), required=True)
    eb = p.add_mutually_exclusive_group(required=True)
    eb.add_argument("-e", "--abs-error", type=float)
    eb.add_argument("-r", "--rel-error", type=float)
    p.add_argument("--interp", choices=("linear", "cubic"), default="cubic")
    p.add_argument("--lp", type=int, default=None, help="number of progressive levels")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("retrieve", help="reconstruct at a requested fidelity")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--session")
    _add_fidelity(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("refine", help="improve a previous retrieval")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--session", required=True)
    p.add_argument("--prev", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_fidelity(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("inspect", help="describe an archive")
    p.add_argument("-i", "--input", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("metrics", help="compare two raw fields")
    p.add_argument("original")
    p.add_argument("reconstructed")
    p.add_argument("-d", "--dims", type=int, nargs="+", required=True)
    p.add_argument("-t", "--type", choices=("f32", "f64"), required=True)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _emit(args.func(args))
    except InfeasibleRequestError as exc:
        _emit({"error": "infeasible", "message": str(exc)})
        return EXIT_INFEASIBLE
    except (IPCompError, ValueError, OSError) as exc:
        _emit({"error": type(exc).__name__, "message": str(exc)})
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())

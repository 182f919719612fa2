"""Command-line front end.

Subcommands: ``estimate``, ``oracle {length,tube,arclen,reach}``,
``pathology`` and ``rootdetect``. Results go to stdout (6 significant digits)
and, with ``--out``, to JSON or CSV files at 17 significant digits with a run
manifest next to them. Exit codes: 0 success, 1 error, 2 success with warnings.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .calculus1d import fence_check, lambda_bound_check, root_detector
from .estimator import QuadratureConfig, estimate_measure
from .expr import ExpressionDomainError, ExpressionSyntaxError, parse
from .fields import AnalyticField, DistanceField
from .geometry import (
    CurveError,
    arc_length_graph,
    polyline_length,
    reach_estimate,
    read_curve_csv,
    tube_volume,
)
from .pathology import (
    CircleSet,
    RadiusSchedule,
    annulus_square_area,
    build_circle_set,
    circles_to_curves,
    coverage_curve,
)

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2

ESTIMATE_SCHEMA = {
    "type": "object",
    "required": ["config", "per_k", "limit", "h_measure", "residual", "warnings"],
    "properties": {
        "config": {"type": "object"},
        "per_k": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["k", "F", "cells"],
                "properties": {"k": {"type": "integer"}, "F": {"type": "number"}, "cells": {"type": "integer"}},
            },
        },
        "limit": {"type": "number"},
        "h_measure": {"type": "number", "minimum": 0},
        "residual": {"type": "number", "minimum": 0},
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
}

CIRCLESET_SCHEMA = {
    "type": "object",
    "required": ["circles", "total_length"],
    "properties": {
        "circles": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["cx", "cy", "r"],
                "properties": {
                    "cx": {"type": "number"},
                    "cy": {"type": "number"},
                    "r": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "total_length": {"type": "number", "minimum": 0},
    },
}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["command", "parameters", "outputs", "wall_time", "tool_version"],
    "properties": {
        "command": {"type": "string"},
        "parameters": {"type": "object"},
        "outputs": {"type": "array", "items": {"type": "string"}},
        "wall_time": {"type": "number", "minimum": 0},
        "tool_version": {"type": "string"},
    },
}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _g6(x: float) -> str:
    return f"{x:.6g}"


def _g17(x: float) -> str:
    return f"{x:.17g}"


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def read_config(path: str | Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Keys use option names."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        k, v = (t.strip() for t in line.split("=", 1))
        out[k.replace("-", "_")] = v.strip("\"'")
    return out


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="levelmeasure", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"levelmeasure {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="result file (.json or .csv)")
    common.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    common.add_argument("--config", help="key = value file; flags override it")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("estimate", parents=[common], help="estimate the measure of a zero set")
    src = e.add_mutually_exclusive_group()
    src.add_argument("--field", help="expression in x, y (z) or x1..xn")
    src.add_argument("--curve", action="append", help="curve CSV (repeatable); uses the distance field")
    src.add_argument("--circles", help="CircleSet JSON; uses the distance field of its circles")
    e.add_argument("--dim", type=int, default=2)
    e.add_argument("--R", type=float)
    e.add_argument("--k-schedule", type=_int_list)
    e.add_argument("--base-cells", type=_positive_int)
    e.add_argument("--max-depth", type=_positive_int)
    e.add_argument("--refine-factor", type=float)
    e.add_argument("--jitter-seed", type=int)
    e.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    e.set_defaults(func=cmd_estimate)

    o = sub.add_parser("oracle", parents=[common], help="geometric reference values")
    o.add_argument("mode", choices=["length", "tube", "arclen", "reach"])
    o.add_argument("--curve", action="append")
    o.add_argument("--eps", type=float)
    o.add_argument("--h", type=float, default=1e-3)
    o.add_argument("--f", help="one-variable expression (arclen)")
    o.add_argument("--a", type=float)
    o.add_argument("--b", type=float)
    o.add_argument("--n", type=_positive_int, default=1024)
    o.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    o.set_defaults(func=cmd_oracle)

    q = sub.add_parser("pathology", parents=[common], help="greedy circle construction")
    q.add_argument("--n", type=_positive_int, required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--emit-schedule", action="store_true")
    q.add_argument("--m-max", type=int, default=20, help="rows of the schedule table")
    q.add_argument("--coverage", type=float, metavar="DELTA")
    q.add_argument("--h", type=float, default=1e-3)
    q.add_argument("--estimate", action="store_true", help="run the estimator on the circle union")
    q.add_argument("--R", type=float, default=1.5)
    q.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    q.set_defaults(func=cmd_pathology)

    r = sub.add_parser("rootdetect", parents=[common], help="intervals where |f'/f| is large")
    r.add_argument("--f", required=True)
    r.add_argument("--a", type=float, required=True)
    r.add_argument("--b", type=float, required=True)
    r.add_argument("--threshold", type=float, required=True)
    r.add_argument("--n", type=int, default=10_001)
    r.add_argument("--lambda", dest="lam", type=float, help="also run the lambda-bound and fence checks")
    r.set_defaults(func=cmd_rootdetect)
    return p


# --------------------------------------------------------------------------
# output


def _write(args, payload: dict, rows: list[dict] | None, started: float) -> list[str]:
    outputs = []
    if args.out:
        path = Path(args.out)
        if path.suffix.lower() == ".csv":
            if not rows:
                raise CliError("this command has no tabular output; use a .json path")
            with path.open("w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]))
                w.writeheader()
                for row in rows:
                    w.writerow({k: _g17(v) if isinstance(v, float) else v for k, v in row.items()})
        else:
            path.write_text(json.dumps(payload, indent=2, allow_nan=True) + "\n")
        outputs.append(str(path))
    manifest_path = args.manifest or (f"{args.out}.manifest.json" if args.out else None)
    if manifest_path:
        params = {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in vars(args).items()
            if k not in {"func", "out", "manifest"}
        }
        manifest = {
            "command": args.command,
            "parameters": params,
            "outputs": outputs,
            "wall_time": time.perf_counter() - started,
            "tool_version": __version__,
        }
        Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n")
    return outputs


def _load_curves(paths: Sequence[str] | None):
    if not paths:
        raise CliError("--curve is required")
    curves = []
    for p in paths:
        if not Path(p).exists():
            raise CliError(f"curve file not found: {p}")
        curves.append(read_curve_csv(p))
    return curves


# --------------------------------------------------------------------------
# commands


def cmd_estimate(args) -> int:
    started = time.perf_counter()
    notes: list[str] = []
    if args.field:
        field = AnalyticField(parse(args.field, args.dim))
    elif args.curve:
        field = DistanceField(_load_curves(args.curve))
    elif args.circles:
        cs = CircleSet.from_json(json.loads(Path(args.circles).read_text()))
        curves, notes = circles_to_curves(cs)
        if not curves:
            raise CliError("no circle is large enough to sample")
        field = DistanceField(curves)
    else:
        raise CliError("one of --field, --curve or --circles is required")
    if args.R is None:
        raise CliError("--R is required")
    kw: dict[str, Any] = {"R": args.R, "threads": args.threads}
    for name in ("k_schedule", "base_cells", "max_depth", "refine_factor", "jitter_seed"):
        if getattr(args, name) is not None:
            kw[name] = getattr(args, name)
    if field.dim == 3:
        kw.setdefault("base_cells", 16)
        kw.setdefault("max_depth", 4)
    elif field.dim > 3:
        raise CliError("the command line integrates in 2 or 3 dimensions")
    try:
        cfg = QuadratureConfig(**kw)
    except ValueError as exc:
        raise CliError(f"invalid config: {exc}")
    est = estimate_measure(field, cfg)
    est.warnings[:0] = notes
    payload = est.to_json()
    rows = [{"k": r.k, "F": r.F, "cells": r.cells} for r in est.per_k]
    _write(args, payload, rows, started)
    for r in est.per_k:
        print(f"k={r.k:<6d} F={_g6(r.F)}  cells={r.cells}")
    print(f"limit={_g6(est.limit)} h_measure={_g6(est.h_measure)} residual={_g6(est.extrapolation_residual)}")
    for w in est.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_WARN if est.warnings else EXIT_OK


def cmd_oracle(args) -> int:
    started = time.perf_counter()
    if args.mode == "arclen":
        if args.f is None or args.a is None or args.b is None:
            raise CliError("arclen needs --f, --a and --b")
        value = arc_length_graph(parse(args.f, 1), args.a, args.b, args.n)
        payload = {"mode": "arclen", "value": value}
    else:
        curves = _load_curves(args.curve)
        if args.mode == "length":
            value = math.fsum(polyline_length(c) for c in curves)
            payload = {"mode": "length", "value": value}
        elif args.mode == "tube":
            if args.eps is None:
                raise CliError("tube needs --eps")
            value = tube_volume(curves, args.eps, args.h, threads=args.threads)
            payload = {"mode": "tube", "value": value, "eps": args.eps, "h": args.h}
        else:
            if len(curves) != 1:
                raise CliError("reach takes exactly one curve")
            re = reach_estimate(curves[0])
            value = re.reach
            payload = {"mode": "reach", "value": value, "local": re.local, "global": re.global_, "kappa_hat": re.kappa_hat}
    _write(args, payload, [payload], started)
    print(_g6(value))
    return EXIT_OK


def cmd_pathology(args) -> int:
    started = time.perf_counter()
    cs = build_circle_set(args.n, args.seed)
    payload: dict[str, Any] = cs.to_json()
    payload["N"] = cs.N
    payload["seed"] = args.seed
    rows = [{"j": j + 1, "cx": c.cx, "cy": c.cy, "r": c.r, "m": c.m, "inside_parent": c.inside_parent} for j, c in enumerate(cs.circles)]
    warnings = list(cs.warnings)
    if args.emit_schedule:
        table = RadiusSchedule(args.m_max).table()
        payload["schedule"] = table
        for row in table[: max(args.n, 4)]:
            print(f"m={row['m']:<3d} r={_g6(row['r'])} tail_ratio={_g6(row['tail_ratio'])} eps={_g6(row['eps'])}")
    for j, c in enumerate(cs.circles, 1):
        print(f"circle {j}: centre=({_g6(c.cx)}, {_g6(c.cy)}) r={_g6(c.r)}{' (inside)' if c.inside_parent else ''}")
    print(f"total_length={_g6(cs.total_length)}")
    if args.coverage is not None:
        curve = coverage_curve(cs, args.coverage, args.h)
        cov: dict[str, Any] = {"delta": args.coverage, "h": args.h, "fractions": curve}
        if cs.N == 1:
            c = cs.circles[0]
            try:
                cov["closed_form"] = annulus_square_area(c.cx, c.cy, c.r, args.coverage)
            except ValueError:
                pass
        payload["coverage"] = cov
        for j, frac in enumerate(curve, 1):
            rows[j - 1]["coverage"] = frac
        print(f"coverage(delta={_g6(args.coverage)})={_g6(curve[-1])}")
        if "closed_form" in cov:
            print(f"closed_form={_g6(cov['closed_form'])}")
    if args.estimate:
        curves, notes = circles_to_curves(cs)
        warnings += notes
        est = estimate_measure(DistanceField(curves), QuadratureConfig(R=args.R, threads=args.threads))
        payload["estimate"] = est.to_json()
        warnings += est.warnings
        print(f"h_measure={_g6(est.h_measure)} vs total_length={_g6(cs.total_length)}")
    _write(args, payload, rows, started)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_WARN if warnings else EXIT_OK


def cmd_rootdetect(args) -> int:
    started = time.perf_counter()
    expr = parse(args.f, 1)
    found = root_detector(expr, args.a, args.b, args.threshold, args.n)
    payload: dict[str, Any] = {
        "threshold": args.threshold,
        "intervals": [{"lo": d.lo, "hi": d.hi, "kind": d.kind} for d in found],
    }
    for d in found:
        print(f"[{_g6(d.lo)}, {_g6(d.hi)}] {d.kind}")
    if not found:
        print("no intervals")
    if args.lam is not None:
        lc = lambda_bound_check(expr, args.a, args.b, args.lam)
        payload["lambda_check"] = {"holds": lc.holds, "worst_x": lc.worst_x, "worst_ratio": lc.worst_ratio}
        print(f"lambda bound {'holds' if lc.holds else 'fails'}: worst ratio {_g6(lc.worst_ratio)} at x={_g6(lc.worst_x)}")
        if lc.holds:
            fc = fence_check(expr, args.a, args.b, args.lam)
            payload["fence"] = {"lower": fc.lower, "ratio": fc.ratio, "upper": fc.upper, "holds": fc.holds}
            print(f"fence {_g6(fc.lower)} <= {_g6(fc.ratio)} <= {_g6(fc.upper)}")
    _write(args, payload, [{"lo": d.lo, "hi": d.hi, "kind": d.kind} for d in found], started)
    return EXIT_OK


# --------------------------------------------------------------------------


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Turn a --config file into defaults of the chosen subcommand."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    command = next((t for t in rest if not t.startswith("-")), None)
    choices = parser._subparsers._group_actions[0].choices
    if command not in choices:
        return
    sub = choices[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for k, v in read_config(known.config).items():
        if k not in actions or k in {"help", "config"}:
            raise CliError(f"unknown config key: {k}")
        action = actions[k]
        if action.nargs == 0:
            value: Any = v.lower() in {"1", "true", "yes", "on"}
        elif action.type is not None:
            value = action.type(v)
        else:
            value = v
        if isinstance(action, argparse._AppendAction):
            value = [value]
        defaults[k] = value
        action.required = False
    sub.set_defaults(**defaults)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (CliError, ExpressionSyntaxError, ExpressionDomainError, CurveError, OSError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

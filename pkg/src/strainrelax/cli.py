"""Command-line driver.

Commands: run (hierarchy + extraction + artifacts), envelope (pointwise or
surface values), verify (property suites), dump-sdp (sparse text export).
Exit codes: 0 success, 2 validation error, 3 solver failure, 4 property-suite
failure.  Failures print a machine-readable error JSON to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, sdp
from .energy import energy_from_json_obj
from .envelope import envelope_surface, envelope_value
from .errors import (SolverError, StrainRelaxError, StructuralError,
                     UnsupportedEnergyError, ValidationError)
from .moments import assemble_relaxation, load_spec, r_min
from .render import (write_surface_csv, write_surface_svg, write_wireframe_csv,
                     write_wireframe_svg)
from .runner import PipelineOptions, run_pipeline, verify_spec

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_PROPERTIES = 4


def _fail(kind: str, message: str, code: int) -> int:
    json.dump({"error": {"type": kind, "message": message}}, sys.stderr)
    sys.stderr.write("\n")
    return code


def _parse_matrix(text: str) -> np.ndarray:
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
        mat = np.array(rows, dtype=float)
    except ValueError as exc:
        raise ValidationError(f"cannot parse matrix {text!r}: {exc}") from exc
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"matrix {text!r} is not square")
    return mat


def _parse_grid(text: str):
    """--grid "s1:lo:hi:steps,s2:lo:hi:steps" -> two linspace arrays."""
    axes = {}
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 4:
            raise ValidationError(f"bad grid component {part!r}")
        name, lo, hi, steps = bits[0], float(bits[1]), float(bits[2]), int(bits[3])
        axes[name] = np.linspace(lo, hi, steps)
    if set(axes) != {"s1", "s2"}:
        raise ValidationError("grid must define s1 and s2 axes")
    return axes["s1"], axes["s2"]


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="strainrelax",
                                  description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the moment hierarchy on a problem file")
    p_run.add_argument("spec", help="problem JSON file")
    p_run.add_argument("--order", type=int, action="append",
                       help="relaxation order (repeatable; default from the file)")
    p_run.add_argument("--R", type=float, default=None,
                       help="fixed truncation radius")
    p_run.add_argument("--R-auto", action="store_true",
                       help="force the automatic doubling schedule")
    p_run.add_argument("--extract-degree", type=int, default=None)
    p_run.add_argument("--tol-feas", type=float, default=1e-8)
    p_run.add_argument("--tol-gap", type=float, default=1e-7)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", default=".", metavar="DIR")
    p_run.add_argument("--svg", action="store_true")
    p_run.add_argument("--dump-sdp", action="store_true",
                       help="also write each order's SDP in the sparse text format")
    p_run.add_argument("--parallel-orders", action="store_true")

    p_env = sub.add_parser("envelope", help="quasiconvex envelope values")
    p_env.add_argument("energy", help="energy JSON file")
    p_env.add_argument("--F", help='gradient matrix "a,b;c,d"')
    p_env.add_argument("--grid", help='"s1:lo:hi:steps,s2:lo:hi:steps"')
    p_env.add_argument("--method", choices=("auto", "spectral", "projection"),
                       default="auto")
    p_env.add_argument("--out", default=".", metavar="DIR")
    p_env.add_argument("--svg", action="store_true")

    p_ver = sub.add_parser("verify", help="run the property suites on a problem file")
    p_ver.add_argument("spec")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--trials", type=int, default=100)

    p_dump = sub.add_parser("dump-sdp", help="export an assembled relaxation")
    p_dump.add_argument("spec")
    p_dump.add_argument("--order", type=int, required=True)
    p_dump.add_argument("--R", type=float, default=None)
    p_dump.add_argument("--out", default="relaxation.sdp", metavar="FILE")
    p_dump.add_argument("--load-sdp", metavar="FILE",
                        help="read this file back instead and re-dump to --out "
                             "(round-trip check)")
    return top


def cmd_run(args) -> int:
    spec = load_spec(args.spec)
    opts = PipelineOptions(
        orders=tuple(args.order) if args.order else None,
        radius=args.R, force_auto_radius=args.R_auto,
        extract_degree=args.extract_degree,
        tol_feas=args.tol_feas, tol_gap=args.tol_gap,
        seed=args.seed, parallel_orders=args.parallel_orders)
    report = run_pipeline(spec, opts)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.json"), "w") as f:
        json.dump(report.to_json_obj(), f, indent=2)
    for res in report.orders:
        if res.wireframe_rows is not None:
            base = os.path.join(args.out, f"wireframe_r{res.order}")
            write_wireframe_csv(base + ".csv", res.wireframe_rows)
            if args.svg:
                write_wireframe_svg(base + ".svg", res.wireframe_rows)
        if args.dump_sdp and res.relaxation is not None:
            sdp.write_program(res.relaxation.program,
                              os.path.join(args.out, f"relaxation_r{res.order}.sdp"))
    for res in report.orders:
        bary = "-" if res.barycentric_value is None else f"{res.barycentric_value:.6f}"
        print(f"order {res.order}: J_mom = {res.lower_bound:.6f} "
              f"(R = {res.radius_used:g}, {res.iterations} iterations, "
              f"barycentric = {bary})")
    if not report.monotone:
        print("warning: lower bounds are not nondecreasing in the order",
              file=sys.stderr)
    return EXIT_OK


def cmd_envelope(args) -> int:
    with open(args.energy) as f:
        energy = energy_from_json_obj(json.load(f))
    if args.F is None and args.grid is None:
        raise ValidationError("envelope needs --F or --grid")
    if args.F is not None:
        F = _parse_matrix(args.F)
        value = envelope_value(F, energy, method=args.method)
        print(f"{value:.6f}")
    if args.grid is not None:
        s1, s2 = _parse_grid(args.grid)
        rows = envelope_surface(energy, s1, s2, method=args.method)
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "envelope_surface.csv")
        write_surface_csv(path, rows)
        print(f"wrote {path}")
        if args.svg:
            svg_path = os.path.join(args.out, "envelope_surface.svg")
            write_surface_svg(svg_path, rows)
            print(f"wrote {svg_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    spec = load_spec(args.spec)
    outcome = verify_spec(spec, seed=args.seed, trials=args.trials)
    print(json.dumps(outcome.to_json_obj(), indent=2))
    return EXIT_OK if outcome.passed else EXIT_PROPERTIES


def cmd_dump_sdp(args) -> int:
    if args.load_sdp:
        prog = sdp.read_program(args.load_sdp)
    else:
        spec = load_spec(args.spec)
        if args.order < r_min(spec):
            raise ValidationError(
                f"order {args.order} is below the minimal order {r_min(spec)}")
        prog = assemble_relaxation(spec, args.order, R=args.R).program
    sdp.write_program(prog, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "envelope":
            return cmd_envelope(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "dump-sdp":
            return cmd_dump_sdp(args)
        raise ValidationError(f"unknown command {args.command!r}")
    except (ValidationError, StructuralError, UnsupportedEnergyError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_VALIDATION)
    except SolverError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_SOLVER)
    except StrainRelaxError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_VALIDATION)


if __name__ == "__main__":
    sys.exit(main())

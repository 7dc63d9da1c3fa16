"""Command-line interface.

Exit codes
----------
0   converged and every asserted audit passed (``verify``: all checks passed)
2   converged, but an asserted audit failed (``verify``: a check failed)
3   not converged within the iteration cap, or diverged
64  usage or configuration error (includes an unbalanced boundary mass flux)
65  invalid mesh file
70  sub-solver failure; the message names the pipeline stage
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from .coefficients import ConfigurationError
from .config import load_config
from .fixed_point import DivergenceError, StageError, iterate, m_sweep
from .mesh import MeshError, build_rectangle_channel, dump_mesh, load_mesh
from .output import solution_fields, write_fields, write_report, write_table
from .verify import SUITES, run_suite

EXIT_OK = 0
EXIT_AUDIT = 2
EXIT_NOT_CONVERGED = 3
EXIT_USAGE = 64
EXIT_MESH = 65
EXIT_SOLVER = 70

log = logging.getLogger("nsf")


def _thread_limit():
    value = os.environ.get("NSF_THREADS")
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(value))


def _configure_logging(level: str):
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format="%(levelname)s %(message)s")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    _configure_logging(args.verbosity or cfg.get("output", "verbosity"))
    setup = cfg.setup()
    try:
        state, derived, report = iterate(setup)
    except DivergenceError as exc:
        log.error("%s", exc)
        write_report(exc.history, cfg.output_path("report"))
        return EXIT_NOT_CONVERGED
    write_report(report, cfg.output_path("report"))
    points, cells = solution_fields(setup, state, derived)
    write_fields(setup.mesh, cfg.output_path("fields"), points, cells)
    log.info("iterations: %d, converged: %s", report.iterations, report.converged)
    if report.clamp_events and any(report.clamp_events.values()):
        log.info("clamp events: %s", report.clamp_events)
    if not report.converged:
        return EXIT_NOT_CONVERGED
    if not report.audits_passed:
        for a in (report.rows[-1]["momentum_audit"], report.rows[-1]["temperature_audit"],
                  report.radii["temperature"], report.radii["pressure"]):
            if a.asserted and not a.passed:
                log.error("audit %s failed: %.6g > %.6g", a.name, a.lhs, a.rhs)
        return EXIT_AUDIT
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    _configure_logging(args.verbosity or cfg.get("output", "verbosity"))
    setup = cfg.setup()
    entries = m_sweep(setup, cfg.M_list())
    rows = []
    for e in entries:
        diff = e.difference if e.difference is not None else [float("nan")] * 3
        rows.append({"M": e.M, "converged": int(e.report.converged), "iterations": e.report.iterations,
                     "max_rho": e.max_rho, "truncation_fraction": e.activity, "rho_r": e.report.radii["density_r"],
                     "diff_m": diff[0], "diff_xi": diff[1], "diff_pi": diff[2],
                     "pressure_identity": e.pressure_identity, "velocity_lhs": e.velocity_audit.lhs,
                     "velocity_rhs": e.velocity_audit.rhs, "velocity_pass": int(e.velocity_audit.passed)})
        print(f"M={e.M:<10.6g} iterations={e.report.iterations:<4d} max_rho={e.max_rho:.6g} "
              f"active={e.activity:.4g} velocity_bound={'pass' if e.velocity_audit.passed else 'FAIL'}")
    path = cfg.output_path("report").with_name("sweep.csv")
    write_table(path, list(rows[0]), rows)
    if not all(e.report.converged for e in entries):
        return EXIT_NOT_CONVERGED
    if not all(e.velocity_audit.passed and e.report.audits_passed for e in entries):
        return EXIT_AUDIT
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if c.asserted and not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_AUDIT if failed else EXIT_OK


def cmd_mesh_gen(args) -> int:
    mesh = build_rectangle_channel(args.length, args.height, args.nx, args.ny)
    if args.output == "-":
        dump_mesh(mesh, sys.stdout)
    else:
        with open(args.output, "w") as fh:
            dump_mesh(mesh, fh)
    return EXIT_OK


def cmd_mesh_check(args) -> int:
    try:
        with open(args.path) as fh:
            mesh = load_mesh(fh)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MeshError as exc:
        print(f"invalid mesh: {exc}", file=sys.stderr)
        return EXIT_MESH
    from .mesh import BoundaryTag, boundary_measure

    print(f"vertices={mesh.n_vertices} triangles={mesh.n_triangles} boundary_edges={mesh.n_boundary_edges} "
          f"area={mesh.area:.17g}")
    for tag in BoundaryTag:
        print(f"{tag.name.lower()}: length={boundary_measure(mesh, tag):.17g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsf", description="Steady compressible flow solver with audits.")
    parser.add_argument("-v", "--verbosity", default=None, help="log level (debug, info, warning)")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the fixed-point iteration for a configuration")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="repeat the run over several truncation levels")
    p.add_argument("config")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("verify", help="run a built-in verification suite")
    p.add_argument("suite", choices=SUITES)
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("mesh", help="mesh utilities")
    msub = p.add_subparsers(dest="mesh_command", required=True)
    g = msub.add_parser("gen", help="write a rectangular channel mesh")
    g.add_argument("--length", type=float, default=1.0)
    g.add_argument("--height", type=float, default=0.25)
    g.add_argument("--nx", type=int, default=32)
    g.add_argument("--ny", type=int, default=8)
    g.add_argument("-o", "--output", default="-")
    g.set_defaults(func=cmd_mesh_gen)
    c = msub.add_parser("check", help="validate a mesh file")
    c.add_argument("path")
    c.set_defaults(func=cmd_mesh_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        with _thread_limit():
            return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MeshError as exc:
        print(f"invalid mesh: {exc}", file=sys.stderr)
        return EXIT_MESH
    except ValueError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"solver error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

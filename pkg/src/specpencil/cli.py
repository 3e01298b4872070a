"""Command-line entry point: ``specpencil {toy,mesh,tables,sweep,converge}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import experiments as ex
from .exceptions import (
    ConfigError,
    DegenerateSeedsError,
    MalformedMeshError,
    MeshParseError,
)
from .mesh import generate_voronoi, load, save

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _emit(table: ex.Table, out: str | None) -> None:
    if out:
        table.to_csv(out)
    else:
        table.to_csv(sys.stdout)


def _cmd_toy(args) -> int:
    table = ex.run_toy(args.case, ex.parse_grid(args.grid), args.variant, args.axis, args.fixed)
    _emit(table, args.out)
    if not table.meta["passed"]:
        print(f"toy discrepancy {table.meta['max_discrepancy']:.3e} exceeds {ex.TOY_TOL:g}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _cmd_mesh_gen(args) -> int:
    if args.cells < 1 or args.lloyd < 0:
        raise ConfigError("need --cells >= 1 and --lloyd >= 0")
    mesh = generate_voronoi(args.cells, args.seed, args.lloyd)
    save(mesh, args.out)
    print(f"cells={mesh.n_cells} vertices={mesh.n_vertices} edges={mesh.n_edges}")
    return EXIT_OK


def _cmd_tables(args) -> int:
    meshes = [load(f) for f in args.meshes.split(",") if f]
    if not meshes:
        raise ConfigError("no meshes given")
    _emit(ex.run_tables(meshes, ex.parse_int_list(args.k, "k list")), args.out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    mesh = load(args.mesh)
    table = ex.run_sweep(mesh, args.k, args.axis, args.fixed, ex.parse_grid(args.grid),
                         None if args.below is not None and args.m is None else (args.m or 30),
                         raw=args.raw, below=args.below, stab_mode=args.stab)
    _emit(table, args.out)
    for (i, j), msg in sorted(table.meta["failures"].items()):
        print(f"grid point {max(i, j)} failed: {msg}", file=sys.stderr)
    return EXIT_OK


def _cmd_converge(args) -> int:
    table = ex.run_convergence(args.k, ex.parse_int_list(args.grids, "grid list"),
                               args.alpha, args.beta, args.m, raw=args.raw)
    _emit(table, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specpencil", description="Parametric eigenvalue pencils and VEM Laplace experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("toy", help="diagonal toy pencils against their closed forms")
    t.add_argument("--case", type=int, choices=(1, 2, 3), required=True)
    t.add_argument("--variant", choices=("intersect", "disjoint"))
    t.add_argument("--grid", required=True, help="a:b:step or log:a:b:n")
    t.add_argument("--axis", choices=("alpha", "beta"))
    t.add_argument("--fixed", type=float, default=1.0, help="value of the other parameter")
    t.add_argument("--out")
    t.set_defaults(func=_cmd_toy)

    m = sub.add_parser("mesh", help="mesh utilities")
    msub = m.add_subparsers(dest="mesh_command", required=True, parser_class=_Parser)
    g = msub.add_parser("gen", help="seeded Lloyd-relaxed Voronoi mesh of the unit square")
    g.add_argument("--cells", type=int, required=True)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--lloyd", type=int, default=100)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_mesh_gen)

    tb = sub.add_parser("tables", help="kernel dimensions and inf-sup probe")
    tb.add_argument("--meshes", required=True, help="comma-separated .vempoly files")
    tb.add_argument("--k", default="1,2,3")
    tb.add_argument("--out")
    tb.set_defaults(func=_cmd_tables)

    s = sub.add_parser("sweep", help="VEM spectrum along alpha or beta")
    s.add_argument("--mesh", required=True)
    s.add_argument("--k", type=int, choices=(1, 2, 3), required=True)
    s.add_argument("--axis", choices=("alpha", "beta"), required=True)
    s.add_argument("--fixed", type=float, required=True)
    s.add_argument("--grid", required=True, help="a:b:step or log:a:b:n")
    s.add_argument("--m", type=int, default=None, help="number of eigenvalues (default 30)")
    s.add_argument("--below", type=float, help="every eigenvalue up to this value instead of m")
    s.add_argument("--raw", action="store_true", help="do not divide by pi^2")
    s.add_argument("--stab", choices=("dofi", "trace"), default="dofi")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_sweep)

    c = sub.add_parser("converge", help="eigenvalue errors on refined square grids")
    c.add_argument("--k", type=int, choices=(1, 2, 3), required=True)
    c.add_argument("--grids", default="4,8,16,32")
    c.add_argument("--alpha", type=float, default=1.0)
    c.add_argument("--beta", type=float, default=1.0)
    c.add_argument("--m", type=int, default=1)
    c.add_argument("--raw", action="store_true")
    c.add_argument("--out")
    c.set_defaults(func=_cmd_converge)
    return p


def _check_threads_env() -> None:
    raw = os.environ.get("SPECPENCIL_THREADS")
    if raw is None:
        return
    try:
        ok = int(raw) >= 1
    except ValueError:
        ok = False
    if not ok:
        raise ConfigError(f"SPECPENCIL_THREADS must be a positive integer, got {raw!r}")


def main(argv=None) -> int:
    try:
        _check_threads_env()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigError, MeshParseError, MalformedMeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, ArithmeticError, DegenerateSeedsError, RuntimeError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

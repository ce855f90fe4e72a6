"""Command line interface.

Subcommands: ``list``, ``verify``, ``check-ritt``, ``calc``, ``sqfn`` and
``fm``.  Configuration comes from a TOML file plus ``--set key.path=value``
overrides; experiment reports are written as JSON with CSV artifacts and
rendered figures alongside.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .calculus import ContourEngine, Polynomial
from .fm import (
    FMBasis,
    alpha_coefficients,
    build_fm_contour,
    export_coefficients_csv,
    interior_grid,
    reconstruct,
)
from .geometry import GeometryError
from .harness import EXPERIMENTS, run_experiment
from .matio import FormatError, load_config, load_matrix, load_vector, vertices_from_config
from .operators import OperatorError, classify_ritt, matrix_norm
from .rademacher import SquareFunctionSpec, square_function


def _default_out(args) -> str:
    if getattr(args, "output", None):
        return args.output
    return os.environ.get("STOLZCALC_OUT", "stolzcalc-out")


def _load_cfg(args) -> dict:
    cfg = load_config(getattr(args, "config", None), getattr(args, "set", []) or [])
    return cfg


def _vertices(args, cfg):
    if getattr(args, "vertices", None):
        vals = json.loads(args.vertices)
        return vertices_from_config(vals)
    dom = cfg.get("domain", {})
    if "vertices" in dom:
        return vertices_from_config(dom["vertices"])
    raise FormatError("no vertex set given (use --vertices '[[1,0],[-1,0]]' or a config)")


def cmd_list(args) -> int:
    for name in sorted(EXPERIMENTS):
        print(name)
    return 0


def cmd_verify(args) -> int:
    cfg = _load_cfg(args)
    out_dir = _default_out(args)
    report = run_experiment(args.experiment, cfg, out_dir=out_dir, figures=not args.no_figures)
    for line in report.summary_lines():
        print(line)
    print(f"report: {out_dir}/{args.experiment}_report.json  ({report.wall_time_s:.2f}s)")
    return 0 if report.all_passed else 1


def cmd_check_ritt(args) -> int:
    cfg = _load_cfg(args)
    T = load_matrix(args.matrix)
    E = _vertices(args, cfg)
    cls = classify_ritt(T, E)
    print(f"is_ritt: {cls.is_ritt}")
    if cls.is_ritt:
        print(f"type_estimate: {cls.type_estimate:.6g}")
        print(f"constant: {cls.constant:.6g}  (mesh of {cls.samples_used} points; {cls.detail})")
    else:
        print(f"reason: {cls.detail}")
    return 0 if cls.is_ritt else 1


def cmd_calc(args) -> int:
    cfg = _load_cfg(args)
    T = load_matrix(args.matrix)
    E = _vertices(args, cfg)
    coeffs = json.loads(args.coefficients)
    phi = Polynomial([complex(c) if not isinstance(c, list) else complex(*c) for c in coeffs])
    engine = ContourEngine(T, E, args.contour_radius)
    A = engine.apply(phi.to_holo(E, args.s))
    print(f"|| phi(T) || = {matrix_norm(A, T.p):.12g}")
    for row in A:
        print(" ".join(f"{z.real:+.12e}{z.imag:+.12e}j" for z in row))
    return 0


def cmd_sqfn(args) -> int:
    cfg = _load_cfg(args)
    T = load_matrix(args.matrix)
    E = _vertices(args, cfg)
    if args.vector:
        x, _ = load_vector(args.vector)
    else:
        x = np.ones(T.dim, dtype=complex)
    spec = SquareFunctionSpec(alpha=args.alpha, seed=int(cfg.get("seed", 0)))
    res = square_function(T, E, spec, x)
    print(f"square function (alpha={args.alpha}): {res.value:.12g}")
    print(f"terms used: {res.terms}, tail bound: {res.tail_bound:.3e}, method: {res.rad.method}")
    if res.diverged:
        print("warning: divergence suspected (cap reached without decay)")
    return 0


def cmd_fm(args) -> int:
    cfg = _load_cfg(args)
    E = _vertices(args, cfg)
    contour = build_fm_contour(E, args.r, args.s)
    basis = FMBasis.build(contour, P_max=args.p_cut if args.p_cut else 15)
    out_dir = _default_out(args)
    os.makedirs(out_dir, exist_ok=True)
    print(f"contour: rho={contour.rho:.5f} l={contour.l:.5f} delta={contour.delta:.5f}")
    print(f"clearances: {contour.clearance_report}")
    for m, j in sorted({(b.m, b.j) for b in contour.bands}):
        pts = np.concatenate(
            [[b.start, b.end] for b in contour.bands if (b.m, b.j) == (m, j)]
        )
        arr = np.column_stack([pts.real, pts.imag])
        np.savetxt(
            os.path.join(out_dir, f"fm_segment_{m}_{j}.csv"),
            arr,
            delimiter=",",
            header="re,im",
            comments="",
        )
    grid = interior_grid(contour, 50)
    co = alpha_coefficients(contour, basis, lambda z: np.ones_like(z), hinf=1.0)
    export_coefficients_csv(co, os.path.join(out_dir, "fm_coefficients.csv"))
    rec = reconstruct(contour, basis, co, grid, K_cut=args.k_cut, P_cut=args.p_cut)
    err = float(np.abs(rec - 1.0).max())
    print(f"constant-function reconstruction error on {len(grid)} points: {err:.3e}")
    print(f"segment and coefficient CSVs written to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="stolzcalc",
        description="Numerical functional calculus on generalized Stolz domains",
    )
    ap.add_argument("--config", help="TOML config file", default=None)
    ap.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a dotted config key (repeatable)",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list registered experiments")

    v = sub.add_parser("verify", help="run one experiment and report pass/fail")
    v.add_argument("experiment", choices=sorted(EXPERIMENTS))
    v.add_argument("--output", help="output directory", default=None)
    v.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    c = sub.add_parser("check-ritt", help="classify an operator from a matrix file")
    c.add_argument("--matrix", required=True)
    c.add_argument("--vertices", help='JSON like [[1,0],[-1,0]]', default=None)

    g = sub.add_parser("calc", help="apply a polynomial to an operator via the contour")
    g.add_argument("--matrix", required=True)
    g.add_argument("--vertices", default=None)
    g.add_argument("--coefficients", required=True, help="JSON ascending coefficients")
    g.add_argument("--s", type=float, default=0.9, help="function domain radius")
    g.add_argument("--contour-radius", type=float, default=0.7)

    q = sub.add_parser("sqfn", help="square function of a vector")
    q.add_argument("--matrix", required=True)
    q.add_argument("--vertices", default=None)
    q.add_argument("--alpha", type=float, default=1.0)
    q.add_argument("--vector", default=None)

    f = sub.add_parser("fm", help="build the decomposition contour and export it")
    f.add_argument("--vertices", default=None)
    f.add_argument("--r", type=float, default=0.6)
    f.add_argument("--s", type=float, default=0.8)
    f.add_argument("--k-cut", type=int, default=25)
    f.add_argument("--p-cut", type=int, default=15)
    f.add_argument("--output", default=None)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    handlers = {
        "list": cmd_list,
        "verify": cmd_verify,
        "check-ritt": cmd_check_ritt,
        "calc": cmd_calc,
        "sqfn": cmd_sqfn,
        "fm": cmd_fm,
    }
    try:
        return handlers[args.command](args)
    except (FormatError, GeometryError, OperatorError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point ``hyperdg``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .dg import constant_field
from .mesh import MeshParseError, MeshTopologyError, check_admissible, classify_facets, load_mesh
from .study import (ConfigError, RateFitError, StudyConfig, fit_rate, make_mesh, make_problem,
                    read_records, run_convergence, run_one, run_projector_study)


def _parse_beta(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"beta must be comma-separated numbers, got {text!r}")
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("beta needs two components bx,by")
    return np.array(vals)


def cmd_check_mesh(args):
    with open(args.mesh) as fh:
        mesh = load_mesh(fh)
    rep = check_admissible(mesh, args.beta)
    cls = classify_facets(mesh, args.beta)
    out = {
        "elements": mesh.n_elements,
        "facets": mesh.n_facets,
        "h": mesh.h,
        "sigma": mesh.sigma,
        "a1": bool(np.all(rep.a1_ok)),
        "a2": bool(all(rep.a2_ok.values())),
        "admissible": rep.verdict,
        "outflow_facet_counts": [int(c) for c in rep.outflow_facet_count],
        "bad_elements": [int(e) for e in np.flatnonzero(~np.asarray(rep.a1_ok))],
        "upwind_order": None if rep.upwind_order is None else [int(e) for e in rep.upwind_order],
        "cycle": None if rep.cycle is None else [int(e) for e in rep.cycle],
        "facet_classes": {str(e): list(cls.classes[e]) for e in range(mesh.n_elements)},
    }
    print(json.dumps(out, indent=2))
    return 0 if rep.verdict else 1


def cmd_solve(args):
    cfg = StudyConfig.load(args.config)
    mesh = make_mesh(cfg)
    spec, exact = make_problem(cfg)
    p = args.p if args.p is not None else cfg.p_range[1]
    rec = run_one(mesh, p, spec, exact, cfg)
    print(json.dumps({"p": rec.p, "error_l2": rec.error_l2, "error_dg": rec.error_dg,
                      "dofs": rec.dofs, "solver": rec.solver_used, "residual": rec.residual,
                      "wall_time_s": rec.wall_time}, indent=2))
    return 0


def cmd_convergence(args):
    cfg = StudyConfig.load(args.config)
    recs = run_convergence(cfg, out=args.out)
    failed = sum(r.solver_used == "failed" for r in recs)
    print(f"wrote {len(recs)} rows to {args.out or cfg.output}" + (f" ({failed} failed)" if failed else ""))
    return 0


def cmd_projector_study(args):
    cfg = StudyConfig.load(args.config)
    recs = run_projector_study(cfg, out=args.out)
    print(f"wrote {len(recs)} rows to {args.out or cfg.output}")
    return 0


def cmd_rates(args):
    recs = read_records(args.inp)
    window = None if args.pmin is None and args.pmax is None else (
        args.pmin if args.pmin is not None else min(r.p for r in recs),
        args.pmax if args.pmax is not None else max(r.p for r in recs))
    fit = fit_rate(recs, window, args.which)
    print(json.dumps({"which": args.which, "slope": fit.slope, "intercept": fit.intercept,
                      "r_squared": fit.r_squared, "window": list(fit.window)}, indent=2))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="hyperdg", description="Upwind DG for steady transport: "
                                 "mesh checks, solves and p-convergence studies.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("check-mesh", help="classify facets and test mesh admissibility")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--beta", required=True, type=_parse_beta, help="constant field, e.g. 1,1")
    sp.set_defaults(fn=cmd_check_mesh)

    sp = sub.add_parser("solve", help="solve one configured problem")
    sp.add_argument("--config", required=True)
    sp.add_argument("--p", type=int, default=None, help="degree (default: top of p_range)")
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("convergence", help="p-sweep, CSV output")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_convergence)

    sp = sub.add_parser("projector-study", help="projection errors on the reference triangle")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_projector_study)

    sp = sub.add_parser("rates", help="fit log(error) against log(p)")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--which", choices=("l2", "dg"), default="l2")
    sp.add_argument("--pmin", type=int, default=None)
    sp.add_argument("--pmax", type=int, default=None)
    sp.set_defaults(fn=cmd_rates)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("convergence", "projector-study"):
            cfg = StudyConfig.load(args.config)
            if not (args.out or cfg.output):
                raise ConfigError("no output path: pass --out or set 'output' in the config")
            if (args.command == "projector-study") != (cfg.case == "projector_study"):
                raise ConfigError(f"case {cfg.case!r} does not match command {args.command}")
        return args.fn(args)
    except (ConfigError, RateFitError, MeshParseError, MeshTopologyError, OSError, ValueError) as exc:
        print(f"hyperdg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

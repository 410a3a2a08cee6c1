"""Command-line front end.

Exit codes: 0 success or bounded verdict, 1 violated verdict, 2 usage,
configuration or input-format error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .carleson import carleson_constant, read_sequence, sequence_from_sparse, write_sequence
from .dyadic import CubeSet, parse_beta
from .errors import OrliczLabError, UsageError
from .field import constant, read_field, write_field
from .growth import Property, classify, default_grid, parse_growth
from .maximal import fractional_multilinear_maximal, log_maximal, multilinear_weighted_maximal, sparse_decompose
from .orlicz import luxemburg_norm, modular
from .weights import PAIR_KINDS, WeightSystem, muckenhoupt_constant, pair_class_constant, w_class_constant

OUTDIR_ENV = "ORLICZLAB_OUTDIR"
EXIT_OK, EXIT_VIOLATED, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _outdir() -> Path:
    return Path(os.environ.get(OUTDIR_ENV, "."))


def _out_path(text: str | None, default: str) -> Path:
    if text:
        p = Path(text)
        return p if p.is_absolute() or p.parent != Path(".") else _outdir() / p
    return _outdir() / default


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _emit(row: dict) -> None:
    print(json.dumps(_jsonable(row), sort_keys=True))


# ------------------------------------------------------------ subcommands


def cmd_classify(args) -> int:
    phi = parse_growth(args.fn)
    aux = parse_growth(args.aux) if args.aux else None
    grid = default_grid(args.grid_lo, args.grid_hi, args.grid_points)
    rep = classify(phi, Property(args.property.upper()), grid=grid, aux=aux, q=args.q)
    print(f"{phi.descriptor()} {rep.property.value}: estimate {rep.estimate:.12g}, verdict {rep.verdict.value}")
    return EXIT_OK


def _weight(path: str | None, like):
    return read_field(path) if path else constant(like.mesh, 1.0)


def cmd_norm(args) -> int:
    phi = parse_growth(args.fn)
    f = read_field(args.field)
    sigma = _weight(args.weight, f)
    res = luxemburg_norm(phi, f, sigma, tol=args.tol)
    print(f"luxemburg norm {res.value:.15g} (iterations {res.iterations}, residual {res.residual:.3g})")
    print(f"modular {modular(phi, f, sigma):.15g}")
    return EXIT_OK


def cmd_maximal(args) -> int:
    fs = [read_field(p) for p in args.field]
    cs = CubeSet.parse(args.cube_set, fs[0].d)
    if args.log:
        if len(fs) != 1:
            raise UsageError("the logarithmic maximal function takes one input")
        res = log_maximal(fs[0], cs)
    elif args.weight:
        sigmas = [read_field(p) for p in args.weight]
        if len(sigmas) == 1:
            sigmas = sigmas * len(fs)
        res = multilinear_weighted_maximal(sigmas, fs, cs)
    else:
        res = fractional_multilinear_maximal(fs, args.alpha, cs)
    out = _out_path(args.out, "maximal.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_field(res.field, out)
    vals = res.values
    print(f"maximal field written to {out}: min {vals.min():.12g}, max {vals.max():.12g}")
    return EXIT_OK


def cmd_constant(args) -> int:
    kind = args.kind.upper()
    if kind in PAIR_KINDS or kind == "W":
        if not args.sigma:
            raise UsageError(f"{kind} needs --sigma fields")
        sigmas = [read_field(p) for p in args.sigma]
        phis = [parse_growth(t) for t in args.phi] if args.phi else [parse_growth("power:p=2")]
        if len(phis) == 1:
            phis = phis * len(sigmas)
        ws = WeightSystem(sigmas, phis)
        cs = CubeSet.parse(args.cube_set, sigmas[0].d)
        psi = parse_growth(args.psi)
        if kind == "W":
            res = w_class_constant(ws, psi, cs)
        else:
            omega = read_field(args.omega) if args.omega else constant(sigmas[0].mesh, 1.0)
            res = pair_class_constant(kind, ws, omega, psi, cs, args.alpha)
    else:
        if not args.weight:
            raise UsageError(f"{kind} needs --weight")
        w = read_field(args.weight)
        res = muckenhoupt_constant(kind, w, CubeSet.parse(args.cube_set, w.d), args.p)
    _emit(res.as_row())
    return EXIT_OK


def cmd_carleson(args) -> int:
    nu = read_field(args.nu)
    if args.from_sparse:
        f = read_field(args.from_sparse)
        sigma = read_field(args.sigma) if args.sigma else constant(f.mesh, 1.0)
        fam = sparse_decompose([sigma], [f], args.a, parse_beta(args.grid, f.d))
        seq = sequence_from_sparse(fam, "weight_E", omega=nu)
        out = _out_path(args.out, "sequence.txt")
        out.parent.mkdir(parents=True, exist_ok=True)
        write_sequence(seq, out)
        print(f"{len(seq)} cubes written to {out}")
    elif args.sequence:
        seq = read_sequence(args.sequence)
    else:
        raise UsageError("need --sequence or --from-sparse")
    theta = parse_growth(args.theta)
    res = carleson_constant(seq, nu, theta)
    _emit({"value": res.value, "argmax_cube": res.argmax.descriptor() if res.argmax else None, "cubes": len(seq)})
    return EXIT_OK


_EXPERIMENT_FLAGS = {
    "theorem": str, "d": int, "n": int, "L": int, "w": int, "phis": str, "psi": str, "alpha": float,
    "sigma": str, "omega": str, "f": str, "seed": int, "trials": int, "cube_set": str, "a": float,
    "p": float, "samples": int, "jobs": int, "bound": float, "output": str, "formats": str,
}


def cmd_experiment(args) -> int:
    from .harness import ExperimentConfig, run_experiment, write_report

    overrides = {k: getattr(args, k) for k in _EXPERIMENT_FLAGS}
    overrides["sigma_equal"] = args.sigma_equal
    overrides["refine"] = False if args.no_refine else None
    overrides["plots"] = False if args.no_plots else None
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, overrides)
    else:
        if not args.theorem:
            raise UsageError("need --config or --theorem")
        theorem = overrides.pop("theorem")
        cfg = ExperimentConfig.build(theorem, **overrides)
    report = run_experiment(cfg)
    stem = _out_path(cfg.output, f"{cfg.theorem.lower()}_seed{cfg.seed}")
    written = [write_report(report, fmt, stem.with_name(stem.name + "." + fmt)) for fmt in cfg.formats]
    if cfg.plots:
        from .plotting import render

        written += render(report, stem)
    s, v = report.summary, report.verdict
    print(f"{cfg.theorem}: verdict {v['status']} ({v['reason']})")
    print(f"  max ratio {s['max_ratio']:.6g}, median ratio {s['median_ratio']:.6g}")
    if "min_lower_ratio" in s:
        print(f"  indicator lower ratios in [{s['min_lower_ratio']:.6g}, {s['max_lower_ratio']:.6g}]")
    trend = s["refinement_trend"]
    if "factor" in trend:
        print(f"  refinement L={trend['levels'][0]} -> L={trend['levels'][1]}: factor {trend['factor']:.4g}")
    for p in written:
        print(f"  wrote {p}")
    return EXIT_OK if report.bounded else EXIT_VIOLATED


def cmd_report(args) -> int:
    from .harness import validate_report

    if not args.validate:
        raise UsageError("report needs --validate PATH")
    data = validate_report(args.validate)
    if "verdict" in data:
        print(f"{args.validate}: valid report for {data['theorem_id']} ({len(data['trials'])} trials)")
    else:
        print(f"{args.validate}: valid CSV ({data['trials']} rows)")
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="orliczlab", description="Weighted Orlicz maximal-operator toolkit.")
    ap.add_argument("--version", action="version", version=f"orliczlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("classify", help="grid classification of a growth function")
    p.add_argument("--fn", required=True)
    p.add_argument("--property", required=True, choices=[x.value.lower() for x in Property] + [x.value for x in Property])
    p.add_argument("--q", type=float)
    p.add_argument("--aux", help="second growth function (RATIO_MONOTONE)")
    p.add_argument("--grid-lo", type=float, default=1e-6)
    p.add_argument("--grid-hi", type=float, default=1e6)
    p.add_argument("--grid-points", type=int, default=241)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("norm", help="Luxemburg norm and modular of a field file")
    p.add_argument("--fn", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--weight")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("maximal", help="maximal function of field files")
    p.add_argument("--field", action="append", required=True)
    p.add_argument("--weight", action="append")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--cube-set", default="single")
    p.add_argument("--log", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_maximal)

    p = sub.add_parser("constant", help="weight or pair class constant")
    p.add_argument("--kind", required=True)
    p.add_argument("--weight")
    p.add_argument("--p", type=float)
    p.add_argument("--sigma", action="append")
    p.add_argument("--omega")
    p.add_argument("--phi", action="append")
    p.add_argument("--psi", default="power:p=2")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--cube-set", default="single")
    p.set_defaults(func=cmd_constant)

    p = sub.add_parser("carleson", help="Carleson constant of a sequence file")
    p.add_argument("--nu", required=True)
    p.add_argument("--theta", default="power:p=1")
    p.add_argument("--sequence")
    p.add_argument("--from-sparse", metavar="FIELD")
    p.add_argument("--sigma")
    p.add_argument("--a", type=float, default=2.0)
    p.add_argument("--grid", default="0", help="shift, e.g. 0 or 1/3 per axis")
    p.add_argument("--out")
    p.set_defaults(func=cmd_carleson)

    p = sub.add_parser("experiment", help="run a seeded experiment")
    p.add_argument("--config")
    for name, typ in _EXPERIMENT_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    p.add_argument("--sigma-equal", dest="sigma_equal", action="store_const", const=True)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="validate a written report")
    p.add_argument("--validate", metavar="PATH")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OrliczLabError as exc:
        print(f"orliczlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"orliczlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

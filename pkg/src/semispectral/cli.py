"""Command-line front end.

Exit codes: 0 success, 1 a checked property fails, 2 non-commuting input,
3 malformed or unnormalized POVM, 4 usage or parse error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from .kernels import ConvolutionKernel, IntervalSet, KernelProfile, unsharp_position
from .povm import DiscretePOVM, MalformedPOVM, OutcomeGrid, RingSet, check_normalization, is_commutative
from .reconstruction import NonCommuting, VonNeumannTriplet, build_triplet, check_separation

EXIT_OK, EXIT_FAILS, EXIT_NONCOMMUTING, EXIT_MALFORMED, EXIT_USAGE = 0, 1, 2, 3, 4

PROPERTIES = ("uniform-continuity", "strong-feller", "norm-1", "absolute-continuity",
              "sigma-additivity")
DEMOS = ("unsharp-position-compact", "optimal-phase-space", "dini")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _load_povm(path: str) -> DiscretePOVM:
    obj = _load_json(path)
    try:
        return DiscretePOVM.from_json(obj)
    except MalformedPOVM:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path} is not a POVM file: {exc}") from exc


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _grid(text: str) -> OutcomeGrid:
    a, b, m = _floats(text, 3)
    if m != int(m) or m < 1 or not a < b:
        raise UsageError(f"bad --grid value {text!r}; use a,b,m with a<b and m>=1")
    return OutcomeGrid.uniform(a, b, int(m))


def _profile(args) -> KernelProfile:
    if args.profile == "gaussian":
        if not args.l > 0:
            raise UsageError("--l must be positive")
        return KernelProfile.gaussian(args.l)
    return {"box": KernelProfile.box, "triangle": KernelProfile.triangle}[args.profile]()


def _spectrum(args) -> tuple[float, float]:
    if args.spectrum:
        lo, hi = _floats(args.spectrum, 2)
        return lo, hi
    # Compact profiles follow the [0, 1] position model, the Gaussian the whole line.
    return (-math.inf, math.inf) if args.profile == "gaussian" else (0.0, 1.0)


# -- commands -------------------------------------------------------------------


def run_reconstruct(args) -> int:
    povm = _load_povm(args.input)
    comm = is_commutative(povm, args.tol)
    if not comm:
        err = NonCommuting(comm.max_commutator_norm, comm.worst_pair)
        sys.stdout.write(dumps({"error": "NonCommuting", "worst_pair": list(comm.worst_pair),
                                "max_commutator_norm": comm.max_commutator_norm}))
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NONCOMMUTING
    povm.validate()
    triplet = build_triplet(povm, tol=args.tol, bits=args.bits, cluster_tol=args.cluster_tol,
                            seed=args.seed)
    if args.out:
        Path(args.out).write_text(dumps(triplet.to_json()))
    sep = check_separation(triplet.kernel)
    summary = {
        "K": triplet.kernel.K,
        "labels": triplet.to_json()["labels"],
        "bits_per_effect": triplet.generator.bits_per_effect,
        "max_round_trip_residual": triplet.residual(),
        "separated": sep.separated,
        "kernel": triplet.kernel.values.tolist(),
    }
    sys.stdout.write(dumps(summary))
    return EXIT_OK


def run_smear(args) -> int:
    if args.input:
        try:
            triplet = VonNeumannTriplet.from_json(_load_json(args.input))
        except MalformedPOVM:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{args.input} is not a triplet file: {exc}") from exc
        povm = triplet.povm
    else:
        if not (args.profile and args.points and args.grid):
            raise UsageError("smear needs --in TRIPLET or --profile with --points and --grid")
        kernel = ConvolutionKernel(_profile(args))
        povm = unsharp_position(kernel, _floats(args.points), _grid(args.grid),
                                tail_policy=args.tail_policy).povm
    _emit(dumps(povm.to_json()), args.out)
    return EXIT_OK


def _finite_reports(povm: DiscretePOVM, props, args) -> list[an.PropertyReport]:
    reports = []
    m = povm.m
    for prop in props:
        if prop == "uniform-continuity":
            fam = [RingSet(povm.grid, range(n, m)) for n in range(m + 1)]
            reports.append(an.uniform_continuity_check(povm, fam, povm.grid.empty(), args.eps))
        elif prop == "strong-feller":
            reports.append(an.strong_feller_check(povm))
        elif prop == "norm-1":
            reports.append(an.norm1_check(povm))
        elif prop == "absolute-continuity":
            reports.append(an.absolute_continuity_constant(
                povm, an.DominatingMeasure.counting_cells(povm.grid), seed=args.seed))
        elif prop == "sigma-additivity":
            triplet = build_triplet(povm, tol=args.tol, bits=args.bits,
                                    cluster_tol=args.cluster_tol, seed=args.seed)
            reports.append(an.sigma_additivity_check(triplet.kernel,
                                                     an.cell_partitions(povm.grid)))
    return reports


def _family(name: str):
    if name == "halflines":
        return an.halflines_family(10)
    if name == "shrinking":
        return an.dyadic_family(30)
    raise UsageError(f"unknown family {name!r}; use halflines or shrinking")


DEFAULT_INTERVALS = [IntervalSet.interval(0.0, 1.0), IntervalSet.interval(-0.3, 0.2),
                     IntervalSet.interval(0.5, 3.0)]


def _kernel_reports(model: an.KernelModel, props, args) -> list[an.PropertyReport]:
    reports = []
    prof = model.kernel.profile
    for prop in props:
        if prop == "uniform-continuity":
            fam, lim = _family(args.family)
            reports.append(an.uniform_continuity_check(model, fam, lim, args.eps))
        elif prop == "strong-feller":
            reports.append(an.strong_feller_check(model, DEFAULT_INTERVALS))
        elif prop == "norm-1":
            reports.append(an.norm1_check(model))
        elif prop == "absolute-continuity":
            if math.isfinite(prof.support[0]):
                nu = an.DominatingMeasure.lebesgue(-1.0, 1.0, prof.density_bound)
            else:
                nu = an.DominatingMeasure.lebesgue()
            reports.append(an.absolute_continuity_constant(model, nu, seed=args.seed))
        elif prop == "sigma-additivity":
            raise UsageError("sigma-additivity needs a POVM file (--in)")
    return reports


def _format_reports(reports, fmt: str) -> str:
    if fmt == "csv":
        lines = ["property,n,residual"]
        for rep in reports:
            lines += [f"{rep.property},{int(n)},{float(r)!r}" for n, r in rep.residuals]
        return "\n".join(lines) + "\n"
    return dumps([r.to_json() for r in reports])


def run_check(args) -> int:
    props = [p for group in args.property for p in group.split(",") if p]
    unknown = [p for p in props if p not in PROPERTIES]
    if unknown or not props:
        raise UsageError(f"unknown property {unknown or props}; choose from {', '.join(PROPERTIES)}")
    if args.input:
        povm = _load_povm(args.input)
        if not check_normalization(povm):
            povm.validate()
        reports = _finite_reports(povm, props, args)
    elif args.profile:
        model = an.KernelModel(ConvolutionKernel(_profile(args)), _spectrum(args))
        reports = _kernel_reports(model, props, args)
    else:
        raise UsageError("check needs --in POVM or --profile")
    _emit(_format_reports(reports, args.format), args.out)
    return EXIT_OK if all(r.ok for r in reports) else EXIT_FAILS


def _curve_csv(xs, mus) -> str:
    lines = ["x,mu"] + [f"{float(x)!r},{float(m)!r}" for x, m in zip(xs, mus)]
    return "\n".join(lines) + "\n"


def run_demo(args) -> int:
    if args.name not in DEMOS:
        raise UsageError(f"unknown demo {args.name!r}; choose from {', '.join(DEMOS)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files: list[str] = []
    reports: list[an.PropertyReport] = []

    def write(name: str, text: str):
        (out / name).write_text(text)
        files.append(name)

    if args.name == "dini":
        lam = np.linspace(0.0, 0.9, 1000)
        rep = an.dini_check(np.array([lam**n for n in range(1, 301)]), lam)
        write("dini_sup_series.csv", rep.to_csv())
        reports.append(rep)
        summary = {"demo": "dini", "verdict": rep.verdict, "sup_at_n_300": rep.residuals[-1][1]}
    elif args.name == "unsharp-position-compact":
        deltas = [IntervalSet.interval(0.0, 0.5), IntervalSet.interval(0.25, 1.0)]
        xs = np.linspace(0.0, 1.0, 101)
        summary = {"demo": args.name, "x_grid": [0.0, 1.0, 101], "deltas": [d.to_json() for d in deltas]}
        fam, lim = an.dyadic_family(30)
        for prof in (KernelProfile.box(), KernelProfile.triangle()):
            kernel = ConvolutionKernel(prof)
            for i, d in enumerate(deltas):
                write(f"curve_{prof.family}_{i}.csv", _curve_csv(xs, kernel(d, xs)))
            model = an.KernelModel(kernel, (0.0, 1.0))
            rep = an.uniform_continuity_check(model, fam, lim, args.eps)
            rep.details["profile"] = prof.family
            reports.append(rep)
            summary[f"{prof.family}_uniform_continuity"] = rep.verdict
    else:
        kernel = ConvolutionKernel(KernelProfile.gaussian(args.l))
        deltas = [IntervalSet.below(-1.0), IntervalSet.interval(-1.0, 1.0)]
        xs = np.linspace(-10.0, 10.0, 201)
        for i, d in enumerate(deltas):
            write(f"curve_gaussian_{i}.csv", _curve_csv(xs, kernel(d, xs)))
        model = an.KernelModel(kernel, (-math.inf, math.inf))
        fam, lim = an.halflines_family(10)
        reports.append(an.uniform_continuity_check(model, fam, lim, args.eps))
        reports.append(an.strong_feller_check(model, DEFAULT_INTERVALS))
        reports.append(an.norm1_check(model))
        summary = {"demo": args.name, "l": args.l, "x_grid": [-10.0, 10.0, 201],
                   "deltas": [d.to_json() for d in deltas],
                   "uniform_continuity": reports[0].verdict,
                   "strong_feller": reports[1].verdict, "norm_1": reports[2].verdict}
    write("reports.json", dumps([r.to_json() for r in reports]))
    summary["files"] = sorted(files + ["summary.json"])
    (out / "summary.json").write_text(dumps(summary))
    sys.stdout.write(dumps(summary))
    return EXIT_OK


def run_report(args) -> int:
    obj = _load_json(args.input)
    items = obj if isinstance(obj, list) else [obj]
    try:
        reports = [an.PropertyReport(o["property"], o["verdict"],
                                     [tuple(p) for p in o["residuals"]], o.get("witness"),
                                     o.get("details", {})) for o in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{args.input} is not a report file: {exc}") from exc
    _emit(_format_reports(reports, args.format), args.out)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output file (directory for demo)")
    common.add_argument("--tol", type=float, default=1e-9)
    common.add_argument("--cluster-tol", type=float, default=1e-8)
    common.add_argument("--bits", type=int, default=16)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    profile = _Parser(add_help=False)
    profile.add_argument("--profile", choices=("gaussian", "box", "triangle"))
    profile.add_argument("--l", type=float, default=1.0, help="Gaussian width")
    profile.add_argument("--spectrum", help="lo,hi of the position spectrum (inf allowed)")

    parser = _Parser(prog="semispectral", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("reconstruct", parents=[common], help="build a von Neumann triplet")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=run_reconstruct)

    p = sub.add_parser("smear", parents=[common, profile], help="POVM from a triplet or profile")
    p.add_argument("--in", dest="input")
    p.add_argument("--points", help="comma-separated position eigenvalues")
    p.add_argument("--grid", help="a,b,m outcome grid")
    p.add_argument("--tail-policy", default="report-deficit",
                   choices=("absorb", "renormalize", "report-deficit"))
    p.set_defaults(func=run_smear)

    p = sub.add_parser("check", parents=[common, profile], help="run property checks")
    p.add_argument("--in", dest="input")
    p.add_argument("--property", action="append", required=True)
    p.add_argument("--family", default="halflines")
    p.add_argument("--eps", type=float, default=1e-6)
    p.set_defaults(func=run_check)

    p = sub.add_parser("demo", parents=[common], help="emit curves and reports")
    p.add_argument("name")
    p.add_argument("--l", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=1e-6)
    p.set_defaults(func=run_demo)

    p = sub.add_parser("report", parents=[common], help="convert a report file")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=run_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "demo" and not args.out:
        args.out = f"demo-{args.name}"
    for name in ("tol", "cluster_tol"):
        if getattr(args, name) <= 0:
            print(f"error: --{name.replace('_', '-')} must be positive", file=sys.stderr)
            return EXIT_USAGE
    if args.bits < 1:
        print("error: --bits must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonCommuting as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCOMMUTING
    except MalformedPOVM as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())

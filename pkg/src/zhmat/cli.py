"""Command line interface: build / verify / bench-mvm / sweep."""

from __future__ import annotations

import argparse
import sys

from .bench import (
    BenchConfig,
    reports_to_csv,
    reports_to_json,
    run_bench_mvm,
    run_build,
    run_sweep,
    run_verify,
)


def _add_config_args(p: argparse.ArgumentParser):
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument("--n", type=int, help="problem size (20*4^r)")
    size.add_argument("--refine", type=int, help="sphere refinement level r")
    p.add_argument("--format", default="h",
                   choices=["h", "uh", "h2", "hodlr", "blr"])
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--nmin", type=int, default=32, dest="n_min")
    p.add_argument("--compress", default="none", choices=["none", "aflp", "fpx"],
                   dest="scheme")
    p.add_argument("--valr", action="store_true",
                   help="rate-adaptive factor/basis compression")
    p.add_argument("--variant", default="all", help="mvm variant or 'all'")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report file (default: stdout)")
    p.add_argument("--json", action="store_true",
                   help="emit JSON instead of CSV")


def _config_from_args(args) -> BenchConfig:
    return BenchConfig(
        refine=args.refine,
        n=args.n,
        format=args.format,
        eps=args.eps,
        eta=args.eta,
        n_min=args.n_min,
        scheme=args.scheme,
        valr=args.valr,
        variant=args.variant,
        threads=args.threads,
        reps=args.reps,
        seed=args.seed,
    )


def _emit(reports, args):
    text = reports_to_json(reports) if args.json else reports_to_csv(reports)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="zhmat",
        description="Hierarchical matrix build, verification and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="build a matrix, report memory")
    _add_config_args(p_build)
    p_build.add_argument("--matrix-out", help="write the container file here")

    p_verify = sub.add_parser("verify", help="error against the flat reference")
    _add_config_args(p_verify)

    p_bench = sub.add_parser("bench-mvm", help="time the product variants")
    _add_config_args(p_bench)

    p_sweep = sub.add_parser("sweep", help="repeat a campaign over an axis")
    _add_config_args(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=["n", "refine", "eps"])
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")

    args = parser.parse_args(argv)
    config = _config_from_args(args)

    if args.command == "build":
        reports = [run_build(config, matrix_path=args.matrix_out)]
    elif args.command == "verify":
        reports = [run_verify(config)]
    elif args.command == "bench-mvm":
        reports = run_bench_mvm(config)
    else:
        raw = [v for v in args.values.split(",") if v]
        values = [float(v) if args.axis == "eps" else int(v) for v in raw]
        reports = run_sweep(config, args.axis, values)
    _emit(reports, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Time every product variant, plain versus compressed storage.

Usage: python scripts/mvm_speedup.py [refine [threads]]   (default: 3 1)

Timings are machine-bound and reported for inspection only; the shipped
guarantee is the bytes-touched accounting, not a speedup figure.
"""

import sys

from zhmat import BenchConfig, reports_to_csv, run_bench_mvm


def main(argv):
    refine = int(argv[0]) if argv else 3
    threads = int(argv[1]) if len(argv) > 1 else 1
    reports = []
    for fmt in ("h", "uh", "h2"):
        for scheme in ("none", "aflp", "fpx"):
            cfg = BenchConfig(refine=refine, format=fmt, eps=1e-6,
                              scheme=scheme, threads=threads, reps=5)
            reports.extend(run_bench_mvm(cfg))
    sys.stdout.write(reports_to_csv(reports))


if __name__ == "__main__":
    main(sys.argv[1:])

"""Memory-per-format trend table: totals, per-DoF bytes, compression ratios.

Usage: python scripts/memory_trends.py [refine ...]   (default: 3 4 5)

Each refinement builds h, uh and h2 in turn and reports the compressed
(aflp + per-column-accuracy) footprint next to the uncompressed one.
Refinement 6 (n=81920) needs a few minutes and roughly 2.4 GB.
"""

import sys

from zhmat import BenchConfig, reports_to_csv, run_build


def main(argv):
    refinements = [int(a) for a in argv] or [3, 4, 5]
    reports = []
    for refine in refinements:
        for fmt in ("h", "uh", "h2"):
            cfg = BenchConfig(refine=refine, format=fmt, eps=1e-6,
                              n_min=64, scheme="aflp", valr=True)
            reports.append(run_build(cfg))
    sys.stdout.write(reports_to_csv(reports))


if __name__ == "__main__":
    main(sys.argv[1:])

"""Product error against the dense reference as the accuracy knob moves.

Usage: python scripts/error_trends.py [refine]   (default: 3)

For each eps on the grid, every format is verified twice: once as built
and once with lossy aflp storage, so the codec's contribution to the
error is visible next to the approximation's own.
"""

import sys

from zhmat import BenchConfig, reports_to_csv, run_verify


def main(argv):
    refine = int(argv[0]) if argv else 3
    reports = []
    for eps in (1e-2, 1e-4, 1e-6, 1e-8):
        for fmt in ("h", "uh", "h2"):
            for scheme in ("none", "aflp"):
                cfg = BenchConfig(refine=refine, format=fmt, eps=eps,
                                  scheme=scheme)
                reports.append(run_verify(cfg))
    sys.stdout.write(reports_to_csv(reports))


if __name__ == "__main__":
    main(sys.argv[1:])

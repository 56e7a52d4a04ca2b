"""Benchmark campaigns: build, verify, time, and sweep, with CSV/JSON reports.

A report row carries the full configuration echo plus build time, memory
breakdown, compression ratio, accuracy versus the uncompressed flat
reference, per-variant wall times (minimum and median over repetitions
after one warmup), speedup against the uncompressed baseline, software
arithmetic intensity, and an output checksum.  The CSV row and the JSON
rendering contain identical values.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import dataclass, replace

import numpy as np

from .clustering import (
    BLOCK_LOWRANK,
    admissible_standard,
    admissible_weak,
    build_block_tree,
    build_cluster_tree,
    flat_clustering,
)
from .container import save_matrix
from .formats import (
    build_h2,
    build_hmatrix,
    build_uniform,
    compress_matrix,
    memory_footprint,
    to_dense,
)
from .geometry import build_geometry
from .kernel import assemble_dense
from .mvm import estimate_work, hmvm_seq, mvm_variants

FORMATS = ("h", "uh", "h2", "hodlr", "blr")
SCHEMES = ("none", "aflp", "fpx")

DENSE_ORACLE_LIMIT = 2048  # above this, error falls back to random probes
PROBE_COUNT = 50


def _refinement_for(n: int) -> int:
    r = 0
    size = 20
    while size < n:
        size *= 4
        r += 1
    if size != n:
        raise ValueError(f"n must be 20*4^r (320, 1280, 5120, ...), got {n}")
    return r


@dataclass(frozen=True)
class BenchConfig:
    """One benchmark run; every field lands in the report row."""

    refine: int = None
    n: int = None
    format: str = "h"
    eps: float = 1e-6
    eta: float = 2.0
    n_min: int = 32
    scheme: str = "none"
    valr: bool = False
    variant: str = "all"
    threads: int = 1
    reps: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.refine is None and self.n is None:
            raise ValueError("one of refine / n must be given")
        if self.refine is None:
            object.__setattr__(self, "refine", _refinement_for(self.n))
        elif self.n is None:
            object.__setattr__(self, "n", 20 * 4**self.refine)
        elif self.n != 20 * 4**self.refine:
            raise ValueError(f"n={self.n} inconsistent with refine={self.refine}")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.eps <= 0 or not math.isfinite(self.eps):
            raise ValueError("eps must be positive")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.n_min < 1:
            raise ValueError("n_min must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.variant != "all" and self.variant not in mvm_variants(self.format):
            raise ValueError(
                f"variant {self.variant!r} unknown for format {self.format!r}"
            )
        if self.valr and self.scheme == "none":
            raise ValueError("valr requires a compression scheme")


@dataclass
class BenchReport:
    """Flat record of one run; see CSV_COLUMNS for the serialized order."""

    kind: str
    config: BenchConfig
    build_seconds: float = 0.0
    bytes_dense: int = 0
    bytes_lowrank: int = 0
    bytes_coupling: int = 0
    bytes_basis: int = 0
    bytes_transfer: int = 0
    bytes_structure: int = 0
    bytes_payload_total: int = 0
    bytes_total: int = 0
    uncompressed_payload_bytes: int = 0
    ratio: float = 1.0
    rel_error: float = 0.0
    variant: str = ""
    mvm_min_seconds: float = 0.0
    mvm_median_seconds: float = 0.0
    speedup_min: float = 1.0
    speedup_median: float = 1.0
    flops: int = 0
    bytes_touched: int = 0
    intensity: float = 0.0
    checksum: float = 0.0

    def to_row(self) -> dict:
        cfg = self.config
        return {
            "kind": self.kind,
            "n": cfg.n,
            "refine": cfg.refine,
            "format": cfg.format,
            "eps": cfg.eps,
            "eta": cfg.eta,
            "n_min": cfg.n_min,
            "scheme": cfg.scheme,
            "valr": cfg.valr,
            "variant": self.variant,
            "threads": cfg.threads,
            "reps": cfg.reps,
            "seed": cfg.seed,
            "build_seconds": self.build_seconds,
            "bytes_dense": self.bytes_dense,
            "bytes_lowrank": self.bytes_lowrank,
            "bytes_coupling": self.bytes_coupling,
            "bytes_basis": self.bytes_basis,
            "bytes_transfer": self.bytes_transfer,
            "bytes_structure": self.bytes_structure,
            "bytes_payload_total": self.bytes_payload_total,
            "bytes_total": self.bytes_total,
            "uncompressed_payload_bytes": self.uncompressed_payload_bytes,
            "ratio": self.ratio,
            "rel_error": self.rel_error,
            "mvm_min_seconds": self.mvm_min_seconds,
            "mvm_median_seconds": self.mvm_median_seconds,
            "speedup_min": self.speedup_min,
            "speedup_median": self.speedup_median,
            "flops": self.flops,
            "bytes_touched": self.bytes_touched,
            "intensity": self.intensity,
            "checksum": self.checksum,
        }

    def to_json_dict(self) -> dict:
        cfg = self.config
        return {
            "kind": self.kind,
            "config": {
                "n": cfg.n,
                "refine": cfg.refine,
                "format": cfg.format,
                "eps": cfg.eps,
                "eta": cfg.eta,
                "n_min": cfg.n_min,
                "scheme": cfg.scheme,
                "valr": cfg.valr,
                "variant": self.variant,
                "threads": cfg.threads,
                "reps": cfg.reps,
                "seed": cfg.seed,
            },
            "build": {"seconds": self.build_seconds},
            "memory": {
                "dense": self.bytes_dense,
                "lowrank": self.bytes_lowrank,
                "coupling": self.bytes_coupling,
                "basis": self.bytes_basis,
                "transfer": self.bytes_transfer,
                "structure": self.bytes_structure,
                "payload_total": self.bytes_payload_total,
                "total": self.bytes_total,
                "uncompressed_payload": self.uncompressed_payload_bytes,
                "ratio": self.ratio,
            },
            "accuracy": {"rel_error": self.rel_error},
            "mvm": {
                "min_seconds": self.mvm_min_seconds,
                "median_seconds": self.mvm_median_seconds,
                "speedup_min": self.speedup_min,
                "speedup_median": self.speedup_median,
                "flops": self.flops,
                "bytes_touched": self.bytes_touched,
                "intensity": self.intensity,
                "checksum": self.checksum,
            },
        }


CSV_COLUMNS = tuple(
    BenchReport(kind="build", config=BenchConfig(refine=0)).to_row().keys()
)


def reports_to_csv(reports) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        writer.writerow(report.to_row())
    return out.getvalue()


def reports_to_json(reports) -> str:
    return json.dumps([r.to_json_dict() for r in reports], indent=2)


# ----------------------------------------------------------------------------
# problem construction


@dataclass
class BuiltProblem:
    geom: object
    reference: object  # uncompressed flat container (error baseline)
    uncompressed: object  # requested format before compression
    matrix: object  # what gets benchmarked (compressed if scheme != none)
    build_seconds: float


def build_problem(config: BenchConfig) -> BuiltProblem:
    geom = build_geometry(config.refine)
    start = time.perf_counter()
    if config.format == "blr":
        parts = max(1, -(-geom.n // config.n_min))  # ceil(n / n_min)
        tree = flat_clustering(geom, parts)
        block_tree = build_block_tree(tree, tree, admissible_weak)
    elif config.format == "hodlr":
        tree = build_cluster_tree(geom, config.n_min)
        block_tree = build_block_tree(tree, tree, admissible_weak)
    else:
        tree = build_cluster_tree(geom, config.n_min)
        adm = lambda t, s: admissible_standard(t, s, config.eta)
        block_tree = build_block_tree(tree, tree, adm)
    flat = build_hmatrix(geom, block_tree, config.eps)
    if config.format == "uh":
        uncompressed = build_uniform(flat, config.eps)
    elif config.format == "h2":
        uncompressed = build_h2(build_uniform(flat, config.eps), config.eps)
    else:
        uncompressed = flat
    matrix = uncompressed
    if config.scheme != "none":
        matrix = compress_matrix(uncompressed, config.scheme, config.valr)
    build_seconds = time.perf_counter() - start
    return BuiltProblem(geom, flat, uncompressed, matrix, build_seconds)


def _fill_memory(report: BenchReport, problem: BuiltProblem):
    breakdown = memory_footprint(problem.matrix)
    plain = memory_footprint(problem.uncompressed)
    report.bytes_dense = breakdown.dense
    report.bytes_lowrank = breakdown.lowrank
    report.bytes_coupling = breakdown.coupling
    report.bytes_basis = breakdown.basis
    report.bytes_transfer = breakdown.transfer
    report.bytes_structure = breakdown.structure
    report.bytes_payload_total = breakdown.payload_total
    report.bytes_total = breakdown.total
    report.uncompressed_payload_bytes = plain.payload_total
    report.ratio = plain.payload_total / breakdown.payload_total
    est = estimate_work(problem.matrix)
    report.flops = est.flops
    report.bytes_touched = est.bytes_touched
    report.intensity = est.intensity


def _default_variant(config: BenchConfig) -> str:
    if config.variant != "all":
        return config.variant
    return next(iter(mvm_variants(config.format)))


def _probe_error(matrix, reference, seed: int) -> float:
    """Randomized relative residual of matrix against the flat reference.

    With Gaussian probes the expected squared residual equals the squared
    Frobenius norm of the difference, so this estimates the same quantity
    the dense path measures.
    """
    n = matrix.shape[1]
    rng = np.random.default_rng(seed)
    fn = mvm_variants(matrix.format_tag)[_default_variant_for_format(matrix.format_tag)]
    num = 0.0
    den = 0.0
    for _ in range(PROBE_COUNT):
        x = rng.standard_normal(n)
        y_ref = hmvm_seq(1.0, reference, x, np.zeros(n))
        y_mat = fn(1.0, matrix, x, np.zeros(n), workers=None)
        num += float(np.sum((y_mat - y_ref) ** 2))
        den += float(np.sum(y_ref**2))
    return math.sqrt(num / den) if den else 0.0


def _default_variant_for_format(format_tag: str) -> str:
    return next(iter(mvm_variants(format_tag)))


def measure_error(problem: BuiltProblem, config: BenchConfig) -> float:
    """Relative error of the benchmark matrix against the flat reference."""
    if config.n <= DENSE_ORACLE_LIMIT:
        ref = to_dense(problem.reference)
        got = to_dense(problem.matrix)
        norm = np.linalg.norm(ref)
        return float(np.linalg.norm(got - ref) / norm) if norm else 0.0
    return _probe_error(problem.matrix, problem.reference, config.seed)


# ----------------------------------------------------------------------------
# commands


def run_build(config: BenchConfig, matrix_path=None) -> BenchReport:
    """Build (and optionally save) the configured matrix; reports memory
    and accuracy, no timing loop."""
    problem = build_problem(config)
    report = BenchReport(kind="build", config=config,
                         build_seconds=problem.build_seconds,
                         variant=_default_variant(config))
    _fill_memory(report, problem)
    report.rel_error = measure_error(problem, config)
    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal(config.n)
    fn = mvm_variants(config.format)[report.variant]
    y = fn(1.0, problem.matrix, x, np.zeros(config.n), workers=config.threads)
    report.checksum = float(np.sum(y))
    if matrix_path is not None:
        save_matrix(problem.matrix, matrix_path)
    return report


class VerificationError(AssertionError):
    pass


def run_verify(config: BenchConfig) -> BenchReport:
    """Error report; additionally asserts the blockwise tolerance for
    uncompressed flat formats at dense-oracle sizes."""
    problem = build_problem(config)
    report = BenchReport(kind="verify", config=config,
                         build_seconds=problem.build_seconds,
                         variant=_default_variant(config))
    _fill_memory(report, problem)
    report.rel_error = measure_error(problem, config)
    if (
        config.scheme == "none"
        and config.format in ("h", "hodlr", "blr")
        and config.n <= DENSE_ORACLE_LIMIT
    ):
        geom = problem.geom
        for leaf in problem.matrix.tree.leaves:
            if leaf.kind != BLOCK_LOWRANK:
                continue
            payload = problem.matrix.payloads[leaf.leaf_id]
            block = assemble_dense(geom, leaf.row, leaf.col)
            err = np.linalg.norm(payload.evaluate() - block)
            if err > config.eps * max(np.linalg.norm(block), 1e-300):
                raise VerificationError(
                    f"block ({leaf.row.index},{leaf.col.index}) error {err:.3e} "
                    f"exceeds eps {config.eps:g}"
                )
    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal(config.n)
    fn = mvm_variants(config.format)[report.variant]
    y = fn(1.0, problem.matrix, x, np.zeros(config.n), workers=config.threads)
    report.checksum = float(np.sum(y))
    return report


def _time_variant(fn, matrix, x, reps: int, threads: int):
    n = matrix.shape[0]
    y = np.zeros(n)
    fn(1.0, matrix, x, y, workers=threads)  # warmup
    times = []
    for _ in range(reps):
        y = np.zeros(n)
        start = time.perf_counter()
        fn(1.0, matrix, x, y, workers=threads)
        times.append(time.perf_counter() - start)
    return min(times), statistics.median(times), float(np.sum(y))


def run_bench_mvm(config: BenchConfig) -> list:
    """Timing campaign: one report per requested variant."""
    problem = build_problem(config)
    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal(config.n)
    variants = mvm_variants(config.format)
    if config.variant != "all":
        variants = {config.variant: variants[config.variant]}
    reports = []
    for name, fn in variants.items():
        report = BenchReport(kind="bench-mvm", config=config,
                             build_seconds=problem.build_seconds, variant=name)
        _fill_memory(report, problem)
        report.rel_error = measure_error(problem, config)
        t_min, t_med, checksum = _time_variant(fn, problem.matrix, x,
                                               config.reps, config.threads)
        report.mvm_min_seconds = t_min
        report.mvm_median_seconds = t_med
        report.checksum = checksum
        if config.scheme != "none":
            b_min, b_med, _ = _time_variant(fn, problem.uncompressed, x,
                                            config.reps, config.threads)
            report.speedup_min = b_min / t_min
            report.speedup_median = b_med / t_med
        reports.append(report)
    return reports


def run_sweep(config: BenchConfig, axis: str, values) -> list:
    """One full report row per axis value (axis: n, refine, or eps)."""
    reports = []
    for value in values:
        if axis == "eps":
            cfg = replace(config, eps=float(value))
        elif axis == "n":
            cfg = replace(config, n=int(value), refine=None)
        elif axis == "refine":
            cfg = replace(config, refine=int(value), n=None)
        else:
            raise ValueError("axis must be one of: n, refine, eps")
        if cfg.variant == "all":
            cfg = replace(cfg, variant=_default_variant(cfg))
        reports.extend(run_bench_mvm(cfg))
    return reports

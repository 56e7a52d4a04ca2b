"""Report plumbing: config validation, accounting identities, schemas."""

import csv
import io
import json
import math

import numpy as np
import pytest

from zhmat.bench import (
    CSV_COLUMNS,
    BenchConfig,
    BenchReport,
    build_problem,
    reports_to_csv,
    reports_to_json,
    run_bench_mvm,
    run_build,
    run_sweep,
    run_verify,
)


class TestConfig:
    def test_n_and_refine_resolve_each_other(self):
        assert BenchConfig(n=320).refine == 2
        assert BenchConfig(refine=3).n == 1280
        assert BenchConfig(n=1280, refine=3).n == 1280

    @pytest.mark.parametrize("kwargs", [
        dict(),
        dict(n=321),
        dict(n=320, refine=3),
        dict(n=320, format="hqr"),
        dict(n=320, scheme="zip"),
        dict(n=320, eps=0.0),
        dict(n=320, eps=-1e-6),
        dict(n=320, eta=0.0),
        dict(n=320, n_min=0),
        dict(n=320, threads=0),
        dict(n=320, reps=0),
        dict(n=320, variant="warp"),
        dict(n=320, format="uh", variant="seq"),
        dict(n=320, valr=True),
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            BenchConfig(**kwargs)

    def test_valr_with_scheme_ok(self):
        cfg = BenchConfig(n=320, scheme="fpx", valr=True)
        assert cfg.valr


@pytest.fixture(scope="module")
def report_plain():
    return run_build(BenchConfig(refine=3, format="h", eps=1e-6))


@pytest.fixture(scope="module")
def report_aflp():
    return run_build(BenchConfig(refine=3, format="h", eps=1e-6, scheme="aflp"))


class TestAccounting:
    def test_categories_sum_to_total(self, report_plain):
        r = report_plain
        assert (
            r.bytes_dense + r.bytes_lowrank + r.bytes_coupling
            + r.bytes_basis + r.bytes_transfer + r.bytes_structure
        ) == r.bytes_total
        assert (
            r.bytes_dense + r.bytes_lowrank + r.bytes_coupling
            + r.bytes_basis + r.bytes_transfer
        ) == r.bytes_payload_total
        assert r.bytes_dense > 0 and r.bytes_lowrank > 0

    def test_ratio_recomputes_from_raw_columns(self, report_plain, report_aflp):
        for r in (report_plain, report_aflp):
            again = r.uncompressed_payload_bytes / r.bytes_payload_total
            assert abs(again - r.ratio) <= 1e-12 * r.ratio

    def test_compressed_ratio_above_one(self, report_aflp):
        assert report_aflp.ratio > 1.0

    def test_compressed_touches_fewer_bytes(self, report_plain, report_aflp):
        assert report_aflp.bytes_touched < report_plain.bytes_touched

    def test_every_numeric_field_finite(self, report_aflp):
        for key, value in report_aflp.to_row().items():
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                assert math.isfinite(value), key


class TestBlr:
    def test_one_level_structure(self):
        cfg = BenchConfig(n=320, format="blr", n_min=20)
        problem = build_problem(cfg)
        tree = problem.matrix.tree.row_tree
        assert tree.depth == 1
        assert len(tree.root.children) == 16
        report = run_build(cfg)
        assert report.to_row()["format"] == "blr"
        assert math.isfinite(report.rel_error)


class TestVerify:
    def test_uncompressed_error_zero(self):
        report = run_verify(BenchConfig(n=320, format="h", eps=1e-5))
        assert report.rel_error == 0.0

    def test_compressed_error_near_eps(self):
        report = run_verify(BenchConfig(n=320, format="h", eps=1e-5, scheme="aflp"))
        assert 0.0 < report.rel_error <= 1e-4  # within one order of magnitude

    def test_uh_error_below_build_tolerance(self):
        report = run_verify(BenchConfig(n=320, format="uh", eps=1e-5))
        assert report.rel_error <= 1e-4


class TestBenchMvm:
    def test_single_rep_report_well_formed(self):
        rows = run_bench_mvm(BenchConfig(n=320, variant="seq", reps=1))
        assert len(rows) == 1
        row = rows[0]
        assert row.mvm_min_seconds > 0
        assert row.mvm_median_seconds >= row.mvm_min_seconds
        assert math.isfinite(row.checksum)

    def test_all_variants_one_row_each(self):
        rows = run_bench_mvm(BenchConfig(n=320, format="uh", reps=1))
        assert [r.variant for r in rows] == ["uni", "uni-mutex"]

    def test_checksum_stable_across_threads(self):
        base = BenchConfig(n=320, variant="lists", reps=1)
        a = run_bench_mvm(base)[0].checksum
        b = run_bench_mvm(BenchConfig(n=320, variant="lists", reps=1, threads=4))[0].checksum
        assert a == b

    def test_compressed_run_reports_speedup_columns(self):
        rows = run_bench_mvm(BenchConfig(n=320, variant="seq", reps=1, scheme="fpx"))
        row = rows[0]
        assert row.speedup_min > 0 and math.isfinite(row.speedup_min)
        assert row.ratio > 1.0
        assert row.bytes_touched < row.uncompressed_payload_bytes + 24 * 320 * 40


class TestSweep:
    def test_eps_axis_row_count(self):
        rows = run_sweep(
            BenchConfig(n=320, variant="seq", reps=1),
            "eps",
            [1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
        )
        assert len(rows) == 5
        assert [r.config.eps for r in rows] == [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]

    def test_memory_grows_with_accuracy(self):
        rows = run_sweep(
            BenchConfig(n=320, variant="seq", reps=1),
            "eps",
            [1e-2, 1e-6],
        )
        assert rows[0].bytes_lowrank < rows[1].bytes_lowrank


EXPECTED_COLUMNS = (
    "kind", "n", "refine", "format", "eps", "eta", "n_min", "scheme", "valr",
    "variant", "threads", "reps", "seed", "build_seconds", "bytes_dense",
    "bytes_lowrank", "bytes_coupling", "bytes_basis", "bytes_transfer",
    "bytes_structure", "bytes_payload_total", "bytes_total",
    "uncompressed_payload_bytes", "ratio", "rel_error", "mvm_min_seconds",
    "mvm_median_seconds", "speedup_min", "speedup_median", "flops",
    "bytes_touched", "intensity", "checksum",
)

EXPECTED_JSON_KEYS = {
    "top": {"kind", "config", "build", "memory", "accuracy", "mvm"},
    "config": {"n", "refine", "format", "eps", "eta", "n_min", "scheme",
               "valr", "variant", "threads", "reps", "seed"},
    "memory": {"dense", "lowrank", "coupling", "basis", "transfer",
               "structure", "payload_total", "total",
               "uncompressed_payload", "ratio"},
    "mvm": {"min_seconds", "median_seconds", "speedup_min", "speedup_median",
            "flops", "bytes_touched", "intensity", "checksum"},
}


@pytest.fixture(scope="module")
def report():
    return run_build(BenchConfig(n=320, scheme="fpx", valr=True, format="uh"))


class TestReportSchema:
    def test_csv_header_golden(self, report):
        text = reports_to_csv([report])
        header = text.splitlines()[0]
        assert header == ",".join(EXPECTED_COLUMNS)
        assert CSV_COLUMNS == EXPECTED_COLUMNS

    def test_json_keys_golden(self, report):
        doc = json.loads(reports_to_json([report]))[0]
        assert set(doc) == EXPECTED_JSON_KEYS["top"]
        assert set(doc["config"]) == EXPECTED_JSON_KEYS["config"]
        assert set(doc["memory"]) == EXPECTED_JSON_KEYS["memory"]
        assert set(doc["mvm"]) == EXPECTED_JSON_KEYS["mvm"]
        assert set(doc["build"]) == {"seconds"}
        assert set(doc["accuracy"]) == {"rel_error"}

    def test_csv_and_json_values_identical(self, report):
        row = report.to_row()
        doc = report.to_json_dict()
        flat_json = {
            "kind": doc["kind"],
            **{k: doc["config"][k] for k in doc["config"] if k != "variant"},
            "variant": doc["config"]["variant"],
            "build_seconds": doc["build"]["seconds"],
            "bytes_dense": doc["memory"]["dense"],
            "bytes_lowrank": doc["memory"]["lowrank"],
            "bytes_coupling": doc["memory"]["coupling"],
            "bytes_basis": doc["memory"]["basis"],
            "bytes_transfer": doc["memory"]["transfer"],
            "bytes_structure": doc["memory"]["structure"],
            "bytes_payload_total": doc["memory"]["payload_total"],
            "bytes_total": doc["memory"]["total"],
            "uncompressed_payload_bytes": doc["memory"]["uncompressed_payload"],
            "ratio": doc["memory"]["ratio"],
            "rel_error": doc["accuracy"]["rel_error"],
            "mvm_min_seconds": doc["mvm"]["min_seconds"],
            "mvm_median_seconds": doc["mvm"]["median_seconds"],
            "speedup_min": doc["mvm"]["speedup_min"],
            "speedup_median": doc["mvm"]["speedup_median"],
            "flops": doc["mvm"]["flops"],
            "bytes_touched": doc["mvm"]["bytes_touched"],
            "intensity": doc["mvm"]["intensity"],
            "checksum": doc["mvm"]["checksum"],
        }
        assert flat_json == row

    def test_csv_text_roundtrips_floats(self, report):
        text = reports_to_csv([report])
        parsed = next(iter(csv.DictReader(io.StringIO(text))))
        row = report.to_row()
        assert float(parsed["ratio"]) == row["ratio"]
        assert float(parsed["rel_error"]) == row["rel_error"]
        assert int(parsed["bytes_total"]) == row["bytes_total"]
        assert float(parsed["checksum"]) == row["checksum"]

"""Hierarchical matrices with error-adaptive floating-point compression.

The package builds H-, uniform-H- and H2-matrix approximations of a single
layer potential operator on the sphere, compresses their payloads with
byte-aligned floating-point codecs, and runs the corresponding family of
(parallel) matrix-vector product algorithms plus a benchmark CLI.
"""

from .geometry import Geometry, build_geometry, load_geometry, save_geometry
from .clustering import (
    BlockTree,
    Cluster,
    ClusterTree,
    admissible_standard,
    admissible_weak,
    build_block_tree,
    build_cluster_tree,
    flat_clustering,
)
from .kernel import DenseBlock, LowRankBlock, assemble_dense, kernel_block
from .fpcodec import (
    AflpBuffer,
    CompressedArray,
    FpxBuffer,
    ValrBlock,
    ValrFactor,
    aflp_compress,
    aflp_decompress,
    compress_array,
    deserialize_buffer,
    fpx_compress,
    fpx_decompress,
    serialize_buffer,
    valr_compress,
    valr_compress_basis,
    valr_decompress,
)
from .formats import (
    ClusterBasis,
    H2Matrix,
    HMatrix,
    MemoryBreakdown,
    UniformHMatrix,
    build_h2,
    build_hmatrix,
    build_uniform,
    compress_matrix,
    memory_footprint,
    to_dense,
)
from .container import load_matrix, save_matrix
from .mvm import (
    DETERMINISTIC_VARIANTS,
    WorkEstimate,
    estimate_work,
    hmvm_seq,
    mvm_variants,
)
from .bench import (
    BenchConfig,
    BenchReport,
    reports_to_csv,
    reports_to_json,
    run_bench_mvm,
    run_build,
    run_sweep,
    run_verify,
)

__all__ = [
    "Geometry",
    "build_geometry",
    "save_geometry",
    "load_geometry",
    "Cluster",
    "ClusterTree",
    "BlockTree",
    "build_cluster_tree",
    "flat_clustering",
    "admissible_standard",
    "admissible_weak",
    "build_block_tree",
    "DenseBlock",
    "LowRankBlock",
    "kernel_block",
    "assemble_dense",
    "AflpBuffer",
    "FpxBuffer",
    "CompressedArray",
    "ValrBlock",
    "ValrFactor",
    "aflp_compress",
    "aflp_decompress",
    "fpx_compress",
    "fpx_decompress",
    "compress_array",
    "serialize_buffer",
    "deserialize_buffer",
    "valr_compress",
    "valr_compress_basis",
    "valr_decompress",
    "HMatrix",
    "UniformHMatrix",
    "H2Matrix",
    "ClusterBasis",
    "MemoryBreakdown",
    "build_hmatrix",
    "build_uniform",
    "build_h2",
    "compress_matrix",
    "memory_footprint",
    "to_dense",
    "save_matrix",
    "load_matrix",
    "DETERMINISTIC_VARIANTS",
    "WorkEstimate",
    "estimate_work",
    "hmvm_seq",
    "mvm_variants",
    "BenchConfig",
    "BenchReport",
    "reports_to_csv",
    "reports_to_json",
    "run_bench_mvm",
    "run_build",
    "run_sweep",
    "run_verify",
]

__version__ = "0.1.0"

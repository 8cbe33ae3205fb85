"""Finite-element assembly mini-app with SIMD-friendly element packing.

The package provides reference elements, structured mesh generators, a
lane-major element packing layer, hand-rolled CSR kernels, a preconditioned
conjugate gradient solver, a fractional-step time loop and a benchmark
driver that reports per-kernel timings and per-equation cost profiles.
"""

__version__ = "0.1.0"

from .assembly import AssemblyContext, KernelKind, assemble_boundary
from .bench import BenchConfig, emit_report, run_bench, run_profile
from .elements import ElementType, ReferenceElement, reference_element
from .krylov import SolverStats, pcg_solve
from .mesh import Mesh, ElementGroup, generate_box_mesh, generate_mixed_mesh, renumber_by_type
from .mesh_io import read_mesh, write_mesh
from .packing import PackConfig, PackSet, build_packs
from .sparse import CsrMatrix, build_node_pattern, spmv
from .timeloop import FlowSolver, FlowState, TimeConfig, preset_state, ssp_rk3_step

__all__ = [
    "AssemblyContext",
    "KernelKind",
    "assemble_boundary",
    "BenchConfig",
    "emit_report",
    "run_bench",
    "run_profile",
    "ElementType",
    "ReferenceElement",
    "reference_element",
    "SolverStats",
    "pcg_solve",
    "Mesh",
    "ElementGroup",
    "generate_box_mesh",
    "generate_mixed_mesh",
    "renumber_by_type",
    "read_mesh",
    "write_mesh",
    "PackConfig",
    "PackSet",
    "build_packs",
    "CsrMatrix",
    "build_node_pattern",
    "spmv",
    "FlowSolver",
    "FlowState",
    "TimeConfig",
    "preset_state",
    "ssp_rk3_step",
]

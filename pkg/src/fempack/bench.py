"""Benchmark and verification harness.

Times one kernel (or the whole time loop) over warmup plus measured
repetitions, validates scalar against packed checksums before any
timing is reported, and emits a machine-readable report whose category
and equation tables follow the time-loop's phase attribution.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .assembly import AssemblyContext, KernelKind
from .elements import ElementType
from .errors import ChecksumMismatchError, ConfigurationError
from .krylov import pcg_solve
from .mesh import Mesh, generate_box_mesh, generate_mixed_mesh, renumber_by_type
from .mesh_io import read_mesh
from .sparse import apply_dirichlet, axpy, dot, spmv
from .timeloop import CATEGORIES, EQUATIONS, PRESETS, FlowSolver, TimeConfig, preset_state

KERNELS = ("mass", "laplacian", "momentum", "spmv", "axpy", "dot", "cg", "timeloop")
MESH_GENERATORS = ("hex", "tet", "pyr", "mixed")
LAYOUTS = ("scalar", "packed")
OUTPUT_FORMATS = ("json", "csv")

VECTOR_LENGTH = 1_000_000  # axpy/dot problem size; no mesh involved
CHECKSUM_RTOL = 1e-9
MIXED_FRACTION = 0.5


@dataclass
class BenchConfig:
    mesh_gen: str = "hex"
    nx: int = 8
    ny: int | None = None
    nz: int | None = None
    mesh_file: str | None = None
    kernel: str = "mass"
    layout: str = "packed"
    vector_size: int = 8
    warmup: int = 3
    reps: int = 20
    threads: int | None = None
    tol: float = 1e-8
    steps: int = 5
    dt: float = 1e-3
    preset: str = "rest"
    out: str = "json"
    seed: int = 0

    def validate(self) -> None:
        checks = (
            (self.kernel in KERNELS, f"unknown kernel '{self.kernel}'"),
            (self.layout in LAYOUTS, f"unknown layout '{self.layout}'"),
            (self.mesh_gen in MESH_GENERATORS, f"unknown mesh generator '{self.mesh_gen}'"),
            (self.out in OUTPUT_FORMATS, f"unknown output format '{self.out}'"),
            (self.preset in PRESETS, f"unknown preset '{self.preset}'"),
            (self.reps >= 1, "reps must be at least 1"),
            (self.warmup >= 0, "warmup must be non-negative"),
            (self.nx >= 1, "nx must be at least 1"),
            (self.steps >= 0, "steps must be non-negative"),
            (self.dt > 0.0, "dt must be positive"),
            (self.tol > 0.0, "tol must be positive"),
            (self.threads is None or self.threads >= 1, "threads must be at least 1"),
        )
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)


def resolve_mesh(cfg: BenchConfig) -> Mesh:
    """Mesh from file or generator, grouped by element type."""
    if cfg.mesh_file is not None:
        mesh = read_mesh(cfg.mesh_file)
        mesh, _ = renumber_by_type(mesh)
        return mesh
    ny = cfg.ny if cfg.ny is not None else cfg.nx
    nz = cfg.nz if cfg.nz is not None else cfg.nx
    if cfg.mesh_gen == "mixed":
        mesh, _ = renumber_by_type(
            generate_mixed_mesh(cfg.nx, ny, nz, fraction=MIXED_FRACTION)
        )
        return mesh
    etype = {
        "hex": ElementType.HEX08,
        "tet": ElementType.TET04,
        "pyr": ElementType.PYR05,
    }[cfg.mesh_gen]
    return generate_box_mesh(etype, cfg.nx, ny, nz)


def environment_info(threads: int | None = None) -> dict:
    """CPU model, widest SIMD extension, and jit toolchain versions."""
    import llvmlite
    import numba

    cpu, flags = "unknown", ""
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name") and cpu == "unknown":
                    cpu = line.split(":", 1)[1].strip()
                elif line.startswith("flags") and not flags:
                    flags = line.split(":", 1)[1]
    except OSError:
        pass
    simd = "unknown"
    for probe in ("avx512f", "avx2", "avx", "sse4_2", "sse2"):
        if f" {probe}" in flags:
            simd = probe
            break
    return {
        "cpu": cpu,
        "simd": simd,
        "numba": numba.__version__,
        "llvmlite": llvmlite.__version__,
        "numpy": np.__version__,
        "threads": threads if threads is not None else 1,
    }


def _time_reps(fn, warmup: int, reps: int) -> list[float]:
    """Wall-time samples in microseconds, taken after warmup invocations."""
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples.append((time.perf_counter_ns() - t0) / 1000.0)
    return samples


def _kernel_stats(samples: list[float]) -> dict:
    arr = np.asarray(samples)
    return {
        "median_us": float(np.median(arr)),
        "mean_us": float(np.mean(arr)),
        "min_us": float(np.min(arr)),
        "reps": len(samples),
    }


def _zero_tables() -> tuple[dict, dict]:
    categories = {c: {"time_us": 0.0, "percent": 0.0} for c in CATEGORIES}
    categories["Total"] = {"time_us": 0.0, "percent": 0.0}
    equations = {e: 0.0 for e in EQUATIONS}
    equations["Total"] = 0.0
    return categories, equations


def _profile_tables(diags) -> tuple[dict, dict]:
    cells = {(c, e): 0.0 for c in CATEGORIES for e in EQUATIONS}
    for diag in diags:
        for cell, seconds in diag.timings.items():
            cells[cell] += seconds
    total = sum(cells.values())
    categories, equations = _zero_tables()
    if total == 0.0:
        return categories, equations
    for c in CATEGORIES:
        t = sum(cells[(c, e)] for e in EQUATIONS)
        categories[c] = {"time_us": t * 1e6, "percent": 100.0 * t / total}
    categories["Total"] = {"time_us": total * 1e6, "percent": 100.0}
    for e in EQUATIONS:
        equations[e] = 100.0 * sum(cells[(c, e)] for c in CATEGORIES) / total
    equations["Total"] = 100.0
    return categories, equations


def _random_field(rng, shape) -> np.ndarray:
    return rng.standard_normal(shape)


class _KernelRun:
    """Samples plus checksum for one (kernel, layout) execution."""

    def __init__(self, samples, checksum, solver=None, categories=None, equations=None):
        self.samples = samples
        self.checksum = checksum
        self.solver = solver
        self.categories = categories
        self.equations = equations


def _run_assembly_kernel(cfg: BenchConfig, mesh: Mesh, layout: str, timed: bool) -> _KernelRun:
    ctx = AssemblyContext.build(mesh, cfg.vector_size)
    ctx.refresh_geometry(layout)  # keep the timed region to element work + scatter
    rng = np.random.default_rng(cfg.seed)
    velocity = _random_field(rng, (mesh.nnode, mesh.dim))
    if cfg.kernel == "mass":
        fn = lambda: ctx.assemble_matrix(KernelKind.MASS, layout, reuse=True)
        digest = lambda out: float(np.abs(out.vals).sum())
    elif cfg.kernel == "laplacian":
        fn = lambda: ctx.assemble_matrix(KernelKind.LAPLACIAN, layout, reuse=True)
        digest = lambda out: float(np.abs(out.vals).sum())
    else:  # momentum
        fn = lambda: ctx.assemble_rhs(
            KernelKind.MOMENTUM_RHS, layout, velocity, None, 1.0, 1e-2, 0.0
        )
        digest = lambda out: float(np.abs(out).sum())
    checksum = digest(fn())
    samples = _time_reps(fn, cfg.warmup, cfg.reps) if timed else [0.0]
    return _KernelRun(samples, checksum)


def _run_vector_kernel(cfg: BenchConfig, layout: str, timed: bool) -> _KernelRun:
    rng = np.random.default_rng(cfg.seed)
    x = _random_field(rng, VECTOR_LENGTH)
    y = _random_field(rng, VECTOR_LENGTH)
    if cfg.kernel == "axpy":
        fn = lambda: axpy(2.5, x, y)
        checksum = float(np.abs(fn()).sum())
    else:
        fn = lambda: dot(x, y)
        checksum = abs(float(fn()))
    samples = _time_reps(fn, cfg.warmup, cfg.reps) if timed else [0.0]
    return _KernelRun(samples, checksum)


def _run_spmv_kernel(cfg: BenchConfig, mesh: Mesh, layout: str, timed: bool) -> _KernelRun:
    ctx = AssemblyContext.build(mesh, cfg.vector_size)
    A = ctx.assemble_matrix(KernelKind.MASS, layout)
    rng = np.random.default_rng(cfg.seed)
    x = _random_field(rng, mesh.nnode)
    parallel = cfg.threads is not None and cfg.threads > 1
    fn = lambda: spmv(A, x, parallel=parallel)
    checksum = float(np.abs(fn()).sum())
    samples = _time_reps(fn, cfg.warmup, cfg.reps) if timed else [0.0]
    return _KernelRun(samples, checksum)


def _run_cg_kernel(cfg: BenchConfig, mesh: Mesh, layout: str, timed: bool) -> _KernelRun:
    ctx = AssemblyContext.build(mesh, cfg.vector_size)
    lap = ctx.assemble_matrix(KernelKind.LAPLACIAN, layout)
    pinned, _ = apply_dirichlet(lap, np.array([0]))
    rng = np.random.default_rng(cfg.seed)
    b = _random_field(rng, mesh.nnode)
    b[0] = 0.0
    fn = lambda: pcg_solve(pinned, b, tol=cfg.tol)
    x, stats = fn()
    checksum = float(np.abs(x).sum())
    samples = _time_reps(fn, cfg.warmup, cfg.reps) if timed else [0.0]
    solver = {
        "iterations": stats.iterations,
        "converged": bool(stats.converged),
        "residuals": [float(r) for r in stats.residual_history],
    }
    return _KernelRun(samples, checksum, solver=solver)


def _run_timeloop(cfg: BenchConfig, mesh: Mesh, layout: str, timed: bool) -> _KernelRun:
    state, kwargs = preset_state(cfg.preset, mesh)
    tcfg = TimeConfig(dt=cfg.dt, nsteps=cfg.steps, tol=cfg.tol)
    solver = FlowSolver(mesh, tcfg, layout=layout, vector_size=cfg.vector_size, **kwargs)
    if timed and cfg.warmup > 0 and cfg.steps > 0:
        # one discarded step pulls jit compilation out of the profile
        solver.step(state.copy())
    final, diags = solver.run(state)
    checksum = final.checksum()
    categories, equations = _profile_tables(diags)
    samples = [sum(d.timings.values()) * 1e6 for d in diags] or [0.0]
    solver_info = None
    if diags:
        stats = diags[-1].solver
        solver_info = {
            "iterations": stats.iterations,
            "converged": bool(stats.converged),
            "residuals": [float(r) for r in stats.residual_history],
        }
    return _KernelRun(samples, checksum, solver_info, categories, equations)


def _run_one(cfg: BenchConfig, layout: str, timed: bool) -> _KernelRun:
    if cfg.kernel in ("axpy", "dot"):
        return _run_vector_kernel(cfg, layout, timed)
    mesh = resolve_mesh(cfg)
    if cfg.kernel in ("mass", "laplacian", "momentum"):
        return _run_assembly_kernel(cfg, mesh, layout, timed)
    if cfg.kernel == "spmv":
        return _run_spmv_kernel(cfg, mesh, layout, timed)
    if cfg.kernel == "cg":
        return _run_cg_kernel(cfg, mesh, layout, timed)
    return _run_timeloop(cfg, mesh, layout, timed)


def run_bench(cfg: BenchConfig) -> dict:
    """Execute the configured benchmark and return the report dict.

    The counterpart layout runs untimed first; a checksum disagreement
    beyond 1e-9 relative aborts before any timing is reported.
    """
    cfg.validate()
    if cfg.threads is not None:
        import numba

        try:
            numba.set_num_threads(cfg.threads)
        except ValueError as exc:
            raise ConfigurationError(f"cannot use {cfg.threads} threads: {exc}") from exc

    other = "scalar" if cfg.layout == "packed" else "packed"
    reference = _run_one(cfg, other, timed=False)
    timed_run = _run_one(cfg, cfg.layout, timed=True)
    scale = max(abs(timed_run.checksum), abs(reference.checksum), 1e-300)
    rel = abs(timed_run.checksum - reference.checksum) / scale
    if rel > CHECKSUM_RTOL:
        raise ChecksumMismatchError(
            f"{cfg.kernel} checksums diverge between layouts: "
            f"{cfg.layout}={timed_run.checksum!r} {other}={reference.checksum!r} "
            f"(relative {rel:.3e} > {CHECKSUM_RTOL:g})"
        )

    if timed_run.categories is not None:
        categories, equations = timed_run.categories, timed_run.equations
    else:
        categories, equations = _zero_tables()
    report = {
        "config": asdict(cfg),
        "environment": environment_info(cfg.threads),
        "categories": categories,
        "equations": equations,
        "kernels": {cfg.kernel: _kernel_stats(timed_run.samples)},
        "checksums": {
            cfg.layout: timed_run.checksum,
            other: reference.checksum,
            "rel_diff": rel,
        },
    }
    if timed_run.solver is not None:
        report["solver"] = timed_run.solver
    return report


def run_profile(cfg: BenchConfig) -> dict:
    """Full time-loop profile; same report shape as run_bench."""
    if cfg.kernel != "timeloop":
        cfg = BenchConfig(**{**asdict(cfg), "kernel": "timeloop"})
    return run_bench(cfg)


def _flatten(prefix: str, value, out: dict) -> None:
    if isinstance(value, dict):
        for key, item in value.items():
            _flatten(f"{prefix}.{key}" if prefix else str(key), item, out)
    elif isinstance(value, (list, tuple)):
        out[prefix] = ";".join(_scalar_str(v) for v in value)
    else:
        out[prefix] = _scalar_str(value)


def _scalar_str(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: dict, fmt: str = "json") -> str:
    """Serialize a report deterministically; floats keep full precision."""
    if fmt == "json":
        return json.dumps(report, indent=2) + "\n"
    if fmt == "csv":
        flat: dict = {}
        _flatten("", report, flat)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(flat.keys())
        writer.writerow(flat.values())
        return buf.getvalue()
    raise ConfigurationError(f"unknown output format '{fmt}'")

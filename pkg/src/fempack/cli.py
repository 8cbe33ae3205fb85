"""Command line front end for the benchmark harness.

Exit codes: 0 on success, 1 on configuration or input errors, 2 when
the scalar/packed checksum gate fails.
"""

from __future__ import annotations

import argparse
import sys

from .bench import (
    KERNELS,
    LAYOUTS,
    MESH_GENERATORS,
    OUTPUT_FORMATS,
    BenchConfig,
    emit_report,
    run_bench,
)
from .errors import ChecksumMismatchError, ConfigurationError, MeshParseError
from .packing import VALID_VECTOR_SIZES
from .timeloop import PRESETS


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for the checksum gate
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="fembench",
        description="Time element assembly, sparse, and flow-step kernels "
        "with scalar or lane-packed layouts.",
    )
    parser.add_argument("--mesh-gen", choices=MESH_GENERATORS, default="hex",
                        help="synthetic box mesh family (default hex)")
    parser.add_argument("--nx", type=int, default=8, help="cells along x (default 8)")
    parser.add_argument("--ny", type=int, default=None, help="cells along y (default nx)")
    parser.add_argument("--nz", type=int, default=None, help="cells along z (default nx)")
    parser.add_argument("--mesh-file", default=None, metavar="PATH",
                        help="read the mesh from a file instead of generating one")
    parser.add_argument("--kernel", choices=KERNELS, default="mass",
                        help="what to benchmark (default mass)")
    parser.add_argument("--layout", choices=LAYOUTS, default="packed",
                        help="timed data layout (default packed)")
    parser.add_argument("--vector-size", type=int, default=8,
                        choices=VALID_VECTOR_SIZES, help="lanes per element pack")
    parser.add_argument("--warmup", type=int, default=3,
                        help="untimed repetitions before measuring (default 3)")
    parser.add_argument("--reps", type=int, default=20,
                        help="measured repetitions (default 20)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for parallel kernels (default sequential)")
    parser.add_argument("--tol", type=float, default=1e-8,
                        help="solver relative tolerance (default 1e-8)")
    parser.add_argument("--steps", type=int, default=5,
                        help="time steps for the timeloop kernel (default 5)")
    parser.add_argument("--dt", type=float, default=1e-3,
                        help="time step size (default 1e-3)")
    parser.add_argument("--preset", choices=PRESETS, default="rest",
                        help="initial condition for the timeloop kernel")
    parser.add_argument("--out", choices=OUTPUT_FORMATS, default="json",
                        help="report format on stdout (default json)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for synthetic input fields (default 0)")
    return parser


def config_from_args(args: argparse.Namespace) -> BenchConfig:
    return BenchConfig(
        mesh_gen=args.mesh_gen,
        nx=args.nx,
        ny=args.ny,
        nz=args.nz,
        mesh_file=args.mesh_file,
        kernel=args.kernel,
        layout=args.layout,
        vector_size=args.vector_size,
        warmup=args.warmup,
        reps=args.reps,
        threads=args.threads,
        tol=args.tol,
        steps=args.steps,
        dt=args.dt,
        preset=args.preset,
        out=args.out,
        seed=args.seed,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    try:
        report = run_bench(cfg)
    except ChecksumMismatchError as exc:
        print(f"fembench: checksum gate failed: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, MeshParseError, OSError) as exc:
        print(f"fembench: error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(emit_report(report, cfg.out))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Fractional-step flow driver.

One time step advances velocity, pressure, heat, and two species
concentrations on a shared mesh: three SSP-RK3 stages of explicit
lumped-mass updates (momentum sees the previous step's pressure
gradient), then a single pressure Poisson solve and velocity correction
that projects the provisional velocity onto the discretely
divergence-free space.  Heat and species ride the same stages without
an algebraic solve.

The step driver also defines the operation categories and equation
labels that the benchmark harness attributes wall time to.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .assembly import AssemblyContext, KernelKind, assemble_boundary
from .errors import ConfigurationError, SolverBreakdownError, StepFailureError
from .krylov import SolverStats, pcg_solve
from .mesh import Mesh
from .sparse import (
    CsrMatrix,
    apply_dirichlet,
    csr_add,
    norm2,
    normal_product,
    spmv,
    transpose_csr,
)

# Shu-Osher convex combinations: each stage is a*y0 + b*(y + dt*rate(y)).
RK3_TABLEAU = ((0.0, 1.0), (0.75, 0.25), (1.0 / 3.0, 2.0 / 3.0))

NSPECIES = 2

CATEGORIES = ("MatrixAssembly", "BoundaryAssembly", "AlgebraicSolver", "Others")
EQUATIONS = ("NavierStokes", "Heat", "Chemics")

PRESETS = ("rest", "uniform", "taylor-green-2d")


def ssp_rk3_step(y, dt, rate):
    """One SSP-RK3 step of dy/dt = rate(y) for scalar or array y."""
    yc = y
    for a, b in RK3_TABLEAU:
        yc = a * y + b * (yc + dt * rate(yc))
    return yc


def integrate_ode(y0, dt, nsteps, rate):
    """March the scalar ODE harness with the flow solver's tableau."""
    y = y0
    for _ in range(nsteps):
        y = ssp_rk3_step(y, dt, rate)
    return y


@dataclass
class FlowState:
    """Nodal fields plus the constant material parameters.

    `velocity` is (nnode, dim), `pressure` and `heat` are (nnode,),
    `species` stacks the two concentrations as (2, nnode).
    """

    velocity: np.ndarray
    pressure: np.ndarray
    heat: np.ndarray
    species: np.ndarray
    rho: float = 1.0
    mu: float = 1e-2
    kappa: float = 1e-2
    diffusivity: float = 1e-2

    @classmethod
    def zeros(cls, mesh: Mesh, **params) -> "FlowState":
        n = mesh.nnode
        return cls(
            np.zeros((n, mesh.dim)),
            np.zeros(n),
            np.zeros(n),
            np.zeros((NSPECIES, n)),
            **params,
        )

    def copy(self) -> "FlowState":
        return FlowState(
            self.velocity.copy(),
            self.pressure.copy(),
            self.heat.copy(),
            self.species.copy(),
            self.rho,
            self.mu,
            self.kappa,
            self.diffusivity,
        )

    def validate(self) -> None:
        n = self.pressure.shape[0]
        if self.velocity.ndim != 2 or self.velocity.shape[0] != n:
            raise ConfigurationError("velocity and pressure node counts disagree")
        if self.heat.shape != (n,) or self.species.shape != (NSPECIES, n):
            raise ConfigurationError("scalar field shapes disagree with pressure")
        if not (self.rho > 0.0 and self.mu > 0.0):
            raise ConfigurationError("rho and mu must be positive")
        for name in ("velocity", "pressure", "heat", "species"):
            if not np.isfinite(getattr(self, name)).all():
                raise ConfigurationError(f"{name} contains non-finite values")

    def checksum(self) -> float:
        """Digest of all fields for cross-layout comparison.

        Sums absolute values so symmetric fields cannot cancel to a
        meaninglessly small total.
        """
        return float(
            np.abs(self.velocity).sum() + np.abs(self.pressure).sum()
            + np.abs(self.heat).sum() + np.abs(self.species).sum()
        )


@dataclass
class TimeConfig:
    dt: float
    nsteps: int = 1
    cfl_check: bool = True
    tol: float = 1e-8
    max_iter: int | None = None

    def validate(self) -> None:
        if self.dt <= 0.0:
            raise ConfigurationError("dt must be positive")
        if self.nsteps < 0:
            raise ConfigurationError("nsteps must be non-negative")
        if self.tol <= 0.0:
            raise ConfigurationError("solver tolerance must be positive")


@dataclass
class StepDiagnostics:
    """Per-step solver stats, divergence norms, and phase timings.

    `timings` maps (category, equation) to seconds; every phase of the
    step lands in exactly one cell, so the cells sum to the step time.
    """

    solver: SolverStats
    div_star: float
    div_after: float
    timings: dict = field(default_factory=dict)


def gradient_matrices(ctx: AssemblyContext, layout: str = "packed") -> list[CsrMatrix]:
    """Directional matrices B_k with entries integral(N_i * dN_j/dx_k).

    Each is the convection kernel evaluated with a frozen unit velocity
    along axis k, so the assembly goes through the selected layout.
    """
    n, dim = ctx.mesh.nnode, ctx.mesh.dim
    mats = []
    for k in range(dim):
        unit = np.zeros((n, dim))
        unit[:, k] = 1.0
        mats.append(ctx.assemble_matrix(KernelKind.CONVECTION, layout, velocity=unit))
    return mats


def lumped_mass(ctx: AssemblyContext, layout: str = "packed") -> np.ndarray:
    """Row-sum lumped mass vector; positive on any non-inverted mesh."""
    M = ctx.assemble_matrix(KernelKind.MASS, layout)
    # reduceat is safe: the pattern keeps every diagonal, so no row is empty
    lumped = np.add.reduceat(M.vals, M.rowptr[:-1])
    if not (lumped > 0.0).all():
        raise ConfigurationError("lumped mass has non-positive entries")
    return lumped


def pressure_poisson(
    ctx: AssemblyContext, layout: str = "packed"
) -> tuple[CsrMatrix, np.ndarray, list[CsrMatrix]]:
    """Unpinned projection operator sum_k B_k^T diag(1/M_L) B_k.

    Returns (operator, lumped mass, gradient matrices).  Built from the
    same matrices the correction uses, the operator cancels the
    divergence of the corrected velocity down to solver residual level.
    Row sums vanish because each B_k annihilates constants.
    """
    lumped = lumped_mass(ctx, layout)
    grads = gradient_matrices(ctx, layout)
    lap = None
    for B in grads:
        term = normal_product(B, 1.0 / lumped)
        lap = term if lap is None else csr_add(lap, term)
    return lap, lumped, grads


def preassemble_laplacian(
    ctx: AssemblyContext, layout: str = "packed", pin_node: int = 0
) -> CsrMatrix:
    """Pressure Poisson operator, pinned at one node, assembled once."""
    lap, _, _ = pressure_poisson(ctx, layout)
    pinned, _ = apply_dirichlet(lap, np.array([pin_node]))
    return pinned


def preset_state(
    name: str,
    mesh: Mesh,
    rho: float = 1.0,
    mu: float = 1e-2,
    kappa: float = 1e-2,
    diffusivity: float = 1e-2,
) -> tuple[FlowState, dict]:
    """Named initial condition plus the solver kwargs that match it.

    "rest" is the no-slip box demo (stiff Robin penalty on all walls),
    "uniform" carries a unit x-velocity held by strong Dirichlet values
    on every boundary node, "taylor-green-2d" is the classical vortex
    on a 2d mesh with free boundaries.
    """
    params = dict(rho=rho, mu=mu, kappa=kappa, diffusivity=diffusivity)
    if name == "rest":
        return FlowState.zeros(mesh, **params), {"robin_alpha": 100.0}
    if name == "uniform":
        state = FlowState.zeros(mesh, **params)
        state.velocity[:, 0] = 1.0
        nodes = mesh.boundary_nodes()
        values = np.zeros((nodes.shape[0], mesh.dim))
        values[:, 0] = 1.0
        return state, {"dirichlet_nodes": nodes, "dirichlet_values": values}
    if name == "taylor-green-2d":
        if mesh.dim != 2:
            raise ConfigurationError("taylor-green-2d requires a 2d mesh")
        state = FlowState.zeros(mesh, **params)
        x, y = mesh.coords[:, 0], mesh.coords[:, 1]
        state.velocity[:, 0] = np.sin(np.pi * x) * np.cos(np.pi * y)
        state.velocity[:, 1] = -np.cos(np.pi * x) * np.sin(np.pi * y)
        state.pressure[:] = 0.25 * (np.cos(2.0 * np.pi * x) + np.cos(2.0 * np.pi * y))
        return state, {}
    raise ConfigurationError(f"unknown preset '{name}'")


class FlowSolver:
    """Explicit fractional-step driver bound to one mesh and layout.

    The incremental scheme: stage updates subtract the old pressure
    gradient, the post-stage solve works on the pressure increment, and
    the correction uses the lumped-mass scaled discrete gradient.  The
    SPD solve operator is the negative of the discrete Laplacian, which
    puts a minus sign on the divergence right-hand side.
    """

    def __init__(
        self,
        mesh: Mesh,
        config: TimeConfig,
        layout: str = "packed",
        vector_size: int = 8,
        robin_alpha: float = 0.0,
        robin_beta: float = 0.0,
        dirichlet_nodes: np.ndarray | None = None,
        dirichlet_values: np.ndarray | None = None,
        pin_node: int = 0,
    ):
        config.validate()
        self.mesh = mesh
        self.config = config
        self.layout = layout
        self.ctx = AssemblyContext.build(mesh, vector_size)
        self.robin_alpha = float(robin_alpha)
        self.robin_beta = float(robin_beta)
        if dirichlet_nodes is None:
            self.dirichlet_nodes = np.empty(0, dtype=np.int64)
            self.dirichlet_values = np.empty((0, mesh.dim))
        else:
            self.dirichlet_nodes = np.asarray(dirichlet_nodes, dtype=np.int64)
            self.dirichlet_values = np.asarray(dirichlet_values, dtype=np.float64)
        if self.dirichlet_values.shape != (self.dirichlet_nodes.shape[0], mesh.dim):
            raise ConfigurationError("dirichlet values must have shape (nnodes, dim)")
        self.pin_node = int(pin_node)
        lap, lumped, grads = pressure_poisson(self.ctx, layout)
        self.lumped = lumped
        self.grad_mats = grads
        self.div_mats = [transpose_csr(B) for B in grads]
        self.laplacian, _ = apply_dirichlet(lap, np.array([self.pin_node]))
        self._hmin = self._mesh_size()
        self._cfl_warned = False

    def _mesh_size(self) -> float:
        hmin = np.inf
        for g in self.ctx.groups:
            detjw, _ = self.ctx.geometry(g, self.layout)
            vols = detjw.sum(axis=1)
            if self.layout == "packed":
                vols = vols[g.packset.active_mask]  # padded lanes hold zeros
            hmin = min(hmin, float(vols.min()) ** (1.0 / self.mesh.dim))
        return hmin

    def discrete_divergence(self, u: np.ndarray) -> np.ndarray:
        """Weak divergence: minus the adjoint of the gradient matrices."""
        out = np.zeros(self.mesh.nnode)
        for k in range(self.mesh.dim):
            out -= spmv(self.div_mats[k], np.ascontiguousarray(u[:, k]))
        return out

    def discrete_gradient(self, p: np.ndarray) -> np.ndarray:
        """Nodal gradient field, lumped-mass scaled: M_L^-1 B_k p."""
        out = np.empty((self.mesh.nnode, self.mesh.dim))
        for k in range(self.mesh.dim):
            out[:, k] = spmv(self.grad_mats[k], p) / self.lumped
        return out

    def _check_cfl(self, state: FlowState) -> None:
        with np.errstate(over="ignore"):  # inf speed still trips the warning
            speed = float(np.sqrt((state.velocity**2).sum(axis=1)).max(initial=0.0))
        cfl = speed * self.config.dt / self._hmin
        if cfl > 1.0 and not self._cfl_warned:
            warnings.warn(
                f"advective CFL number {cfl:.2f} exceeds 1; the explicit "
                "stages may be unstable",
                RuntimeWarning,
                stacklevel=3,
            )
            self._cfl_warned = True

    def _mask_velocity(self, u: np.ndarray) -> None:
        if self.dirichlet_nodes.size:
            u[self.dirichlet_nodes] = self.dirichlet_values

    def step(self, state: FlowState) -> tuple[FlowState, StepDiagnostics]:
        """Advance one time step; returns the new state and diagnostics."""
        state.validate()
        cfg = self.config
        dim = self.mesh.dim
        timings: dict[tuple[str, str], float] = {}
        t_start = time.perf_counter()

        def timed(cell, fn, *args):
            t0 = time.perf_counter()
            out = fn(*args)
            timings[cell] = timings.get(cell, 0.0) + time.perf_counter() - t0
            return out

        if cfg.cfl_check:
            self._check_cfl(state)

        rho = state.rho
        p_old = state.pressure
        grad_p = np.empty((self.mesh.nnode, dim))
        for k in range(dim):
            grad_p[:, k] = spmv(self.grad_mats[k], p_old)

        robin_on = self.robin_alpha != 0.0 or self.robin_beta != 0.0
        u0 = state.velocity
        s0 = (state.heat, state.species[0], state.species[1])
        kappas = (state.kappa, state.diffusivity, state.diffusivity)
        labels = ("Heat", "Chemics", "Chemics")

        uc, sc = u0, s0
        for a, b in RK3_TABLEAU:
            r = timed(
                ("MatrixAssembly", "NavierStokes"),
                self.ctx.assemble_rhs,
                KernelKind.MOMENTUM_RHS, self.layout, uc, None, rho, state.mu, 0.0,
            )
            if robin_on:
                R, load = timed(
                    ("BoundaryAssembly", "NavierStokes"),
                    assemble_boundary,
                    self.mesh, self.ctx.pattern, self.robin_alpha, self.robin_beta,
                )
                for k in range(dim):
                    r[:, k] += load - spmv(R, np.ascontiguousarray(uc[:, k]))
            r -= grad_p
            un = a * u0 + b * (uc + (cfg.dt / rho) * (r / self.lumped[:, None]))
            self._mask_velocity(un)
            sn = []
            for phi0, phi, kap, lab in zip(s0, sc, kappas, labels):
                rs = timed(
                    ("MatrixAssembly", lab),
                    self.ctx.assemble_rhs,
                    KernelKind.SCALAR_RHS, self.layout, uc, phi, 1.0, 0.0, kap,
                )
                sn.append(a * phi0 + b * (phi + cfg.dt * (rs / self.lumped)))
            uc, sc = un, sn

        # catch blow-ups before paying for a solve on garbage
        if not (np.isfinite(uc).all() and all(np.isfinite(s).all() for s in sc)):
            raise StepFailureError("stage update produced non-finite values")

        div_star_vec = self.discrete_divergence(uc)
        div_star = norm2(div_star_vec)
        g = (-rho / cfg.dt) * div_star_vec
        if self.dirichlet_nodes.size:
            g[self.dirichlet_nodes] = 0.0
        g[self.pin_node] = 0.0
        try:
            delta, stats = timed(
                ("AlgebraicSolver", "NavierStokes"),
                pcg_solve,
                self.laplacian, g, None, cfg.tol, cfg.max_iter,
            )
        except SolverBreakdownError as exc:
            raise StepFailureError(f"pressure solve broke down: {exc}") from exc
        if not stats.converged:
            raise StepFailureError(
                f"pressure solve stopped at relative residual "
                f"{stats.residual_history[-1]:.3e} after {stats.iterations} "
                f"iterations (tol {cfg.tol:g})",
                stats=stats,
            )

        corr = self.discrete_gradient(delta)
        if self.dirichlet_nodes.size:
            corr[self.dirichlet_nodes] = 0.0
        u_new = uc - (cfg.dt / rho) * corr
        p_new = p_old + delta
        div_after = norm2(self.discrete_divergence(u_new))

        new_state = FlowState(
            u_new, p_new, sc[0], np.stack((sc[1], sc[2])),
            rho, state.mu, state.kappa, state.diffusivity,
        )
        for name in ("velocity", "pressure", "heat", "species"):
            if not np.isfinite(getattr(new_state, name)).all():
                raise StepFailureError(
                    f"{name} diverged to non-finite values", stats=stats
                )

        # whatever was not explicitly attributed above is step overhead
        rest = time.perf_counter() - t_start - sum(timings.values())
        cell = ("Others", "NavierStokes")
        timings[cell] = timings.get(cell, 0.0) + max(rest, 0.0)
        return new_state, StepDiagnostics(stats, div_star, div_after, timings)

    def run(
        self, state: FlowState, nsteps: int | None = None
    ) -> tuple[FlowState, list[StepDiagnostics]]:
        """Advance nsteps (default: config.nsteps) from the given state."""
        count = self.config.nsteps if nsteps is None else nsteps
        diags = []
        for _ in range(count):
            state, diag = self.step(state)
            diags.append(diag)
        return state, diags

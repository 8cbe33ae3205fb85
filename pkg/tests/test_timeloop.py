"""Time integration tests: RK3 tableau, projection operators, stepping."""

import numpy as np
import pytest

from fempack.assembly import AssemblyContext
from fempack.elements import ElementType, compute_geometry, reference_element
from fempack.errors import ConfigurationError, StepFailureError
from fempack.krylov import SolverStats
from fempack.mesh import generate_box_mesh, generate_mixed_mesh, renumber_by_type
from fempack.timeloop import (
    CATEGORIES,
    EQUATIONS,
    FlowSolver,
    FlowState,
    TimeConfig,
    gradient_matrices,
    integrate_ode,
    lumped_mass,
    preassemble_laplacian,
    preset_state,
    pressure_poisson,
    ssp_rk3_step,
)

# single SSP-RK3 step of dy/dt = -y from 1 at dt = 1/10, in exact
# rationals: stages 9/10 and 381/400, combination 5429/6000
RK3_DECAY_STEP = 5429.0 / 6000.0


# ---------------------------------------------------------------- tableau


def test_rk3_single_decay_step_matches_rational_arithmetic():
    got = integrate_ode(1.0, 0.1, 1, lambda y: -y)
    assert got == pytest.approx(RK3_DECAY_STEP, abs=1e-15)
    # third order leaves a visible gap to the exact exponential
    assert abs(got - np.exp(-0.1)) < 5e-6


def test_rk3_stage_arguments_are_shu_osher_values():
    seen = []

    def rate(y):
        seen.append(y)
        return -y

    ssp_rk3_step(1.0, 0.1, rate)
    assert seen[0] == 1.0
    assert seen[1] == pytest.approx(0.9, abs=1e-16)
    assert seen[2] == pytest.approx(0.9525, abs=1e-15)


def test_rk3_convergence_rate_third_order():
    errs = []
    for dt in (0.1, 0.05, 0.025):
        y = integrate_ode(1.0, dt, round(1.0 / dt), lambda y: -y)
        errs.append(abs(y - np.exp(-1.0)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert ((rates > 2.7) & (rates < 3.3)).all()


def test_rk3_steps_arrays_componentwise():
    y0 = np.array([1.0, 2.0, -0.5])
    got = integrate_ode(y0, 0.1, 1, lambda y: -y)
    np.testing.assert_allclose(got, y0 * RK3_DECAY_STEP, rtol=1e-15)


def test_integrate_ode_zero_steps_returns_initial():
    assert integrate_ode(3.5, 0.1, 0, lambda y: -y) == 3.5


# ------------------------------------------------------- state and config


def test_state_zeros_has_expected_shapes():
    mesh = generate_box_mesh(ElementType.QUAD04, 2, 2)
    st = FlowState.zeros(mesh)
    assert st.velocity.shape == (9, 2)
    assert st.pressure.shape == (9,)
    assert st.heat.shape == (9,)
    assert st.species.shape == (2, 9)
    st.validate()


def test_state_validation_rejects_nonfinite_and_bad_parameters():
    mesh = generate_box_mesh(ElementType.QUAD04, 2, 2)
    st = FlowState.zeros(mesh)
    st.velocity[3, 1] = np.nan
    with pytest.raises(ConfigurationError, match="velocity"):
        st.validate()
    st2 = FlowState.zeros(mesh, rho=0.0)
    with pytest.raises(ConfigurationError, match="rho"):
        st2.validate()


def test_state_copy_is_independent():
    mesh = generate_box_mesh(ElementType.QUAD04, 2, 2)
    st = FlowState.zeros(mesh)
    other = st.copy()
    other.heat[:] = 1.0
    assert st.heat.max() == 0.0


def test_state_checksum_sums_all_fields():
    mesh = generate_box_mesh(ElementType.QUAD04, 1, 1)
    st = FlowState.zeros(mesh)
    st.velocity[:] = 1.0    # 4 nodes x 2 comps
    st.pressure[:] = -2.0   # 4, sign must not cancel anything
    st.heat[:] = 3.0        # 4
    st.species[:] = 0.5     # 2 x 4
    assert st.checksum() == pytest.approx(8 + 8 + 12 + 4, abs=1e-13)


@pytest.mark.parametrize(
    "kwargs", [dict(dt=0.0), dict(dt=-1.0), dict(dt=0.1, nsteps=-1), dict(dt=0.1, tol=0.0)]
)
def test_time_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        TimeConfig(**kwargs).validate()


# --------------------------------------------------- projection operators


def dense_gradient_matrix(mesh, k):
    """Reference integral(N_i dN_j/dx_k) by plain per-element loops."""
    n = mesh.nnode
    B = np.zeros((n, n))
    for group in mesh.groups:
        ref = reference_element(group.etype)
        for conn in group.conn:
            geo = compute_geometry(ref, mesh.coords[conn])
            for ig in range(ref.ngauss):
                B[np.ix_(conn, conn)] += geo.detJw[ig] * np.outer(
                    ref.N[:, ig], geo.gradN[k, :, ig]
                )
    return B


@pytest.mark.parametrize("layout", ["scalar", "packed"])
def test_gradient_matrices_match_dense_reference(layout):
    mesh = generate_box_mesh(ElementType.QUAD04, 2, 2)
    ctx = AssemblyContext.build(mesh, vector_size=4)
    mats = gradient_matrices(ctx, layout)
    for k in range(2):
        np.testing.assert_allclose(
            mats[k].to_dense(), dense_gradient_matrix(mesh, k), atol=1e-14
        )


def test_lumped_mass_recovers_mesh_volume():
    mesh, _ = renumber_by_type(generate_mixed_mesh(3, 3, 3, fraction=0.5))
    ctx = AssemblyContext.build(mesh, vector_size=8)
    lumped = lumped_mass(ctx)
    assert (lumped > 0.0).all()
    assert lumped.sum() == pytest.approx(1.0, abs=1e-12)


def test_pressure_poisson_two_triangle_square():
    mesh = generate_box_mesh(ElementType.TRI03, 1, 1)
    ctx = AssemblyContext.build(mesh, vector_size=4)
    lap, lumped, grads = pressure_poisson(ctx)
    dense = lap.to_dense()
    assert dense.shape == (4, 4)
    np.testing.assert_allclose(dense.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(dense, dense.T, atol=1e-15)
    assert len(grads) == 2 and lumped.sum() == pytest.approx(1.0, abs=1e-14)


def test_pressure_poisson_positive_semidefinite_rank_deficiency_one():
    mesh = generate_box_mesh(ElementType.QUAD04, 3, 3)
    ctx = AssemblyContext.build(mesh, vector_size=4)
    lap, _, _ = pressure_poisson(ctx)
    evals = np.linalg.eigvalsh(lap.to_dense())
    assert evals[0] > -1e-12
    assert abs(evals[0]) < 1e-12       # constants
    assert evals[1] > 1e-6             # and nothing else


def test_preassemble_laplacian_pins_symmetrically_and_deterministically():
    mesh = generate_box_mesh(ElementType.TRI03, 1, 1)
    ctx = AssemblyContext.build(mesh, vector_size=4)
    pinned = preassemble_laplacian(ctx)
    dense = pinned.to_dense()
    np.testing.assert_array_equal(dense[0], np.eye(4)[0])
    np.testing.assert_array_equal(dense[:, 0], np.eye(4)[0])
    np.testing.assert_allclose(dense, dense.T, atol=1e-15)
    # constants are no longer in the null space; the pinned row responds
    applied = dense @ np.full(4, 2.0)
    assert applied[0] == 2.0
    assert np.abs(applied).max() > 1.0
    again = preassemble_laplacian(ctx)
    np.testing.assert_array_equal(again.vals, pinned.vals)


@pytest.fixture(scope="module")
def quad_solver():
    mesh = generate_box_mesh(ElementType.QUAD04, 8, 8)
    return FlowSolver(mesh, TimeConfig(dt=1e-3))


def interior_nodes(mesh):
    return np.setdiff1d(np.arange(mesh.nnode), mesh.boundary_nodes())


def test_divergence_of_constant_vanishes_on_interior(quad_solver):
    mesh = quad_solver.mesh
    u = np.ones((mesh.nnode, 2))
    u[:, 1] = 2.0
    div = quad_solver.discrete_divergence(u)
    assert np.abs(div[interior_nodes(mesh)]).max() < 1e-10


def test_divergence_of_solenoidal_linear_field_vanishes(quad_solver):
    mesh = quad_solver.mesh
    x, y = mesh.coords.T
    div = quad_solver.discrete_divergence(np.stack([x, -y], axis=1))
    assert np.abs(div[interior_nodes(mesh)]).max() < 1e-10


def test_divergence_flags_expanding_field(quad_solver):
    mesh = quad_solver.mesh
    x, y = mesh.coords.T
    div = quad_solver.discrete_divergence(np.stack([x, y], axis=1))
    # div u = 2 against each interior test function
    inter = interior_nodes(mesh)
    ref = 2.0 * quad_solver.lumped[inter]
    np.testing.assert_allclose(div[inter], ref, rtol=1e-10)


def test_gradient_of_constant_pressure_vanishes(quad_solver):
    gp = quad_solver.discrete_gradient(np.full(quad_solver.mesh.nnode, 3.0))
    assert np.abs(gp).max() < 1e-10


def test_divergence_gradient_adjoint_on_zero_boundary_fields(quad_solver):
    mesh = quad_solver.mesh
    rng = np.random.default_rng(7)
    u = rng.standard_normal((mesh.nnode, 2))
    p = rng.standard_normal(mesh.nnode)
    u[mesh.boundary_nodes()] = 0.0
    p[mesh.boundary_nodes()] = 0.0
    lhs = float(quad_solver.discrete_divergence(u) @ p)
    weighted = quad_solver.discrete_gradient(p) * quad_solver.lumped[:, None]
    rhs = -float((u * weighted).sum())
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


# ----------------------------------------------------------------- steps


def test_rest_preset_is_a_bitwise_fixed_point():
    mesh = generate_box_mesh(ElementType.HEX08, 3, 3, 3)
    state, kwargs = preset_state("rest", mesh)
    solver = FlowSolver(mesh, TimeConfig(dt=1e-3), **kwargs)
    final, diags = solver.run(state, 3)
    for name in ("velocity", "pressure", "heat", "species"):
        assert np.abs(getattr(final, name)).max() == 0.0
    assert all(d.solver.iterations == 0 for d in diags)


def test_uniform_preset_velocity_survives_ten_steps():
    mesh = generate_box_mesh(ElementType.HEX08, 4, 4, 4)
    state, kwargs = preset_state("uniform", mesh)
    solver = FlowSolver(mesh, TimeConfig(dt=1e-3), **kwargs)
    final, _ = solver.run(state, 10)
    assert np.abs(final.velocity - state.velocity).max() < 1e-9


def test_uniform_preset_pins_boundary_values():
    mesh = generate_box_mesh(ElementType.QUAD04, 3, 3)
    state, kwargs = preset_state("uniform", mesh)
    nodes = kwargs["dirichlet_nodes"]
    np.testing.assert_allclose(state.velocity[nodes], kwargs["dirichlet_values"])


def test_taylor_green_projection_property():
    mesh = generate_box_mesh(ElementType.QUAD04, 12, 12)
    cfg = TimeConfig(dt=1e-3, tol=1e-8)
    state, kwargs = preset_state("taylor-green-2d", mesh)
    solver = FlowSolver(mesh, cfg, **kwargs)
    _, diags = solver.run(state, 5)
    for d in diags:
        assert d.div_star > 0.0
        assert d.div_after <= 10.0 * cfg.tol * d.div_star
        assert d.solver.iterations > 0
        assert d.solver.residual_history[-1] <= cfg.tol


def test_taylor_green_kinetic_energy_decays():
    mesh = generate_box_mesh(ElementType.QUAD04, 12, 12)
    state, kwargs = preset_state("taylor-green-2d", mesh, mu=0.01)
    solver = FlowSolver(mesh, TimeConfig(dt=1e-3), **kwargs)
    def energy(st):
        return float((solver.lumped[:, None] * st.velocity**2).sum())
    levels = [energy(state)]
    for _ in range(4):
        state, _ = solver.step(state)
        levels.append(energy(state))
    assert all(b < a for a, b in zip(levels, levels[1:]))


def test_taylor_green_requires_two_dimensions():
    mesh = generate_box_mesh(ElementType.HEX08, 2, 2, 2)
    with pytest.raises(ConfigurationError, match="2d"):
        preset_state("taylor-green-2d", mesh)


def test_unknown_preset_rejected():
    mesh = generate_box_mesh(ElementType.QUAD04, 2, 2)
    with pytest.raises(ConfigurationError, match="preset"):
        preset_state("vortex-street", mesh)


def test_full_step_identical_between_layouts():
    mesh, _ = renumber_by_type(generate_mixed_mesh(4, 4, 4, fraction=0.5))
    x, y, z = mesh.coords.T

    def initial():
        st = FlowState.zeros(mesh)
        st.velocity[:, 0] = np.sin(np.pi * x) * np.cos(np.pi * y)
        st.velocity[:, 1] = -np.cos(np.pi * x) * np.sin(np.pi * y)
        st.velocity[:, 2] = 0.1 * np.sin(np.pi * z)
        st.heat[:] = np.cos(np.pi * x) * np.cos(np.pi * z)
        st.species[0] = x * y
        st.species[1] = z * (1.0 - z)
        return st

    # tight pressure tolerance keeps the two CG trajectories together
    cfg = TimeConfig(dt=1e-2, nsteps=2, tol=1e-13)
    finals = {}
    for layout in ("scalar", "packed"):
        solver = FlowSolver(mesh, cfg, layout=layout, robin_alpha=10.0, robin_beta=1.0)
        finals[layout], _ = solver.run(initial())
    for name in ("velocity", "pressure", "heat", "species"):
        gap = np.abs(getattr(finals["scalar"], name) - getattr(finals["packed"], name))
        assert gap.max() < 1e-12, name


def test_pure_diffusion_respects_initial_bounds_on_tets():
    mesh = generate_box_mesh(ElementType.TET04, 4, 4, 4)
    x, y, z = mesh.coords.T
    state = FlowState.zeros(mesh, kappa=1.0)
    state.heat[:] = np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z)
    solver = FlowSolver(mesh, TimeConfig(dt=1e-3))
    lo, hi = state.heat.min(), state.heat.max()
    for _ in range(20):
        state, _ = solver.step(state)
        assert state.heat.max() <= hi + 1e-8
        assert state.heat.min() >= lo - 1e-8


def test_constant_scalars_are_transported_exactly():
    mesh = generate_box_mesh(ElementType.QUAD04, 6, 6)
    state, kwargs = preset_state("taylor-green-2d", mesh)
    state.heat[:] = 4.0
    state.species[:] = 0.25
    solver = FlowSolver(mesh, TimeConfig(dt=1e-3), **kwargs)
    final, _ = solver.run(state, 3)
    assert np.abs(final.heat - 4.0).max() < 1e-13
    assert np.abs(final.species - 0.25).max() < 1e-13


def test_nonconverged_pressure_solve_raises_with_stats():
    mesh = generate_box_mesh(ElementType.QUAD04, 12, 12)
    state, kwargs = preset_state("taylor-green-2d", mesh)
    solver = FlowSolver(mesh, TimeConfig(dt=1e-3, tol=1e-12, max_iter=2), **kwargs)
    with pytest.raises(StepFailureError) as err:
        solver.step(state)
    assert isinstance(err.value.stats, SolverStats)
    assert not err.value.stats.converged


def test_blowup_is_reported_as_step_failure():
    mesh = generate_box_mesh(ElementType.QUAD04, 4, 4)
    state, kwargs = preset_state("taylor-green-2d", mesh)
    state.velocity *= 1e200   # overflows inside the first stage
    solver = FlowSolver(mesh, TimeConfig(dt=1e-3), **kwargs)
    with pytest.warns(RuntimeWarning, match="CFL"):
        with pytest.raises(StepFailureError, match="non-finite"):
            solver.step(state)


def test_cfl_warning_fires_once():
    mesh = generate_box_mesh(ElementType.QUAD04, 4, 4)
    state, kwargs = preset_state("taylor-green-2d", mesh)
    solver = FlowSolver(mesh, TimeConfig(dt=10.0, cfl_check=True, tol=1e-6), **kwargs)
    with pytest.warns(RuntimeWarning, match="CFL"):
        try:
            state, _ = solver.step(state)
        except StepFailureError:
            pass


def test_step_timings_land_in_known_cells():
    mesh = generate_box_mesh(ElementType.HEX08, 3, 3, 3)
    state, kwargs = preset_state("rest", mesh)
    solver = FlowSolver(mesh, TimeConfig(dt=1e-3), **kwargs)
    _, diag = solver.step(state)
    for cat, eq in diag.timings:
        assert cat in CATEGORIES and eq in EQUATIONS
    assert diag.timings[("MatrixAssembly", "NavierStokes")] > 0.0
    assert diag.timings[("MatrixAssembly", "Heat")] > 0.0
    assert diag.timings[("MatrixAssembly", "Chemics")] > 0.0
    assert diag.timings[("BoundaryAssembly", "NavierStokes")] > 0.0
    assert all(v >= 0.0 for v in diag.timings.values())


def test_dirichlet_values_shape_is_checked():
    mesh = generate_box_mesh(ElementType.QUAD04, 2, 2)
    with pytest.raises(ConfigurationError, match="dirichlet"):
        FlowSolver(
            mesh,
            TimeConfig(dt=1e-3),
            dirichlet_nodes=np.array([0, 1]),
            dirichlet_values=np.zeros(3),
        )

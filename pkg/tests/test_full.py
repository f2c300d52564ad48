import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import positive_state
from suolson_dlra import AngularBasis, SpatialMesh, build_stencils
from suolson_dlra.diagnostics import local_conservation_residual, state_energy, state_mass
from suolson_dlra.full import (MomentField, NonPositiveEnergyError, SolverConfig, SolverError,
                               explicit_rhs_conservative, solve_coupled_cell,
                               step_full_advection, step_full_conservative, warn_if_unstable)
from suolson_dlra.verification import (dense_explicit, oracle_full_advection,
                                       oracle_full_conservative)

SQRT2 = np.sqrt(2.0)


def equilibrium(n_cells, n_moments, B):
    v = np.zeros((n_cells, n_moments))
    v[:, 0] = SQRT2
    return MomentField(v, np.asarray(B, dtype=float))


# -- coupled cell solve ------------------------------------------------------------

def test_cell_solve_decoupled():
    assert solve_coupled_cell(0.37, 0.0, 0.1) == pytest.approx((1.0, 0.37))


@pytest.mark.parametrize("sigma,dt", [(1.0, 0.01), (10.0, 0.5), (0.3, 2.0)])
def test_cell_solve_equilibrium(sigma, dt):
    w, y = solve_coupled_cell(SQRT2, sigma, dt)
    assert w == pytest.approx(1.0, abs=1e-15)
    assert y == pytest.approx(SQRT2, abs=1e-15)


def test_cell_solve_against_root_find():
    sigma, dt, C0 = 1.0, 0.01, 1.0
    s = sigma * dt

    # eliminate y from w y (1 + s) = C0 + sqrt(2) s w and solve the scalar residual in w
    def residual(w):
        y = (C0 + SQRT2 * s * w) / (w * (1 + s))
        return w - 1 - s * w * (SQRT2 * y - 2)

    w_ref = brentq(residual, 1e-3, 10.0, xtol=1e-15)
    w, y = solve_coupled_cell(C0, sigma, dt)
    assert w == pytest.approx(w_ref, rel=1e-13)
    assert abs(w * y * (1 + s) - C0 - SQRT2 * s * w) < 1e-12
    assert abs(w - 1 - s * w * (SQRT2 * y - 2)) < 1e-12


def test_cell_solve_vectorized_and_failure():
    w, y = solve_coupled_cell(np.array([1.0, 2.0]), 1.0, 0.1)
    assert w.shape == y.shape == (2,)
    with pytest.raises(NonPositiveEnergyError) as info:
        solve_coupled_cell(np.array([1.0, -100.0]), 10.0, 1.0)
    assert list(info.value.cells) == [1]


# -- explicit part -----------------------------------------------------------------------

def test_explicit_constant_state(small_setup):
    mesh, st, basis = small_setup
    v = np.ones((8, 4))
    C = explicit_rhs_conservative(MomentField(v, np.full(8, 2.0)), SolverConfig(0.1, 0.0),
                                  st, basis)
    np.testing.assert_array_equal(C, v)


def test_explicit_large_sigma_vanishes(small_setup, rng):
    mesh, st, basis = small_setup
    v, B = positive_state(rng, 8, 4)
    C = explicit_rhs_conservative(MomentField(v, B), SolverConfig(0.1, 1e14), st, basis)
    assert np.abs(C).max() < 1e-11


def test_explicit_matches_dense(small_setup, rng):
    mesh, st, basis = small_setup
    v, B = positive_state(rng, 8, 4)
    cfg = SolverConfig(0.9 * mesh.dx, 0.7)
    C = explicit_rhs_conservative(MomentField(v, B), cfg, st, basis)
    np.testing.assert_allclose(C, dense_explicit(v, B, cfg.dt, 0.7, mesh, basis), atol=1e-13)


def test_explicit_rejects_nonpositive_B(small_setup):
    mesh, st, basis = small_setup
    B = np.ones(8)
    B[3] = 0.0
    with pytest.raises(NonPositiveEnergyError):
        explicit_rhs_conservative(MomentField(np.ones((8, 4)), B), SolverConfig(0.1), st, basis)


# -- full steps --------------------------------------------------------------------------

@pytest.mark.parametrize("sigma", [0.0, 1.0, 10.0])
def test_conservative_matches_implicit_oracle(small_setup, rng, sigma):
    mesh, st, basis = small_setup
    v, B = positive_state(rng, 8, 4)
    cfg = SolverConfig(0.99 * mesh.dx, sigma)
    out = step_full_conservative(MomentField(v, B), cfg, st, basis)
    v_ref, B_ref = oracle_full_conservative(v, B, cfg.dt, sigma, mesh, basis)
    np.testing.assert_allclose(out.v, v_ref, atol=1e-12)
    np.testing.assert_allclose(out.B, B_ref, atol=1e-12)


def test_conservative_with_source_matches_oracle(small_setup, rng):
    mesh, st, basis = small_setup
    v, B = positive_state(rng, 8, 4)
    Q = rng.uniform(0, 2, size=8)
    cfg = SolverConfig(0.5 * mesh.dx, 1.0, source=Q)
    out = step_full_conservative(MomentField(v, B), cfg, st, basis)
    v_ref, B_ref = oracle_full_conservative(v, B, cfg.dt, 1.0, mesh, basis, Q=Q)
    np.testing.assert_allclose(out.v, v_ref, atol=1e-12)
    np.testing.assert_allclose(out.B, B_ref, atol=1e-12)


@pytest.mark.parametrize("sigma", [0.0, 2.0])
def test_advection_matches_oracle(small_setup, rng, sigma):
    mesh, st, basis = small_setup
    v, B = positive_state(rng, 8, 4)
    cfg = SolverConfig(0.99 * mesh.dx, sigma)
    out = step_full_advection(MomentField(v, B), cfg, st, basis)
    v_ref, B_ref = oracle_full_advection(v, B, cfg.dt, sigma, mesh, basis)
    np.testing.assert_allclose(out.v, v_ref, atol=1e-12)
    np.testing.assert_allclose(out.B, B_ref, atol=1e-12)


@pytest.mark.parametrize("sigma", [0.0, 1.0, 25.0])
def test_equilibrium_is_fixed_point(small_setup, sigma):
    mesh, st, basis = small_setup
    state = equilibrium(8, 4, np.full(8, 3.0))
    cfg = SolverConfig(0.99 * mesh.dx, sigma)
    for step in (step_full_conservative, step_full_advection):
        out = step(state, cfg, st, basis)
        np.testing.assert_allclose(out.v, state.v, atol=1e-14)
        np.testing.assert_allclose(out.B, state.B, atol=1e-14)


def test_equilibrium_with_varying_B_sigma_zero(small_setup):
    """Where B is locally constant the equilibrium moments do not move."""
    mesh, st, basis = small_setup
    B = np.array([1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0])
    out = step_full_conservative(equilibrium(8, 4, B), SolverConfig(0.5 * mesh.dx, 0.0),
                                 st, basis)
    interior = [1, 2, 5, 6]
    np.testing.assert_allclose(out.v[interior, 0], SQRT2, atol=1e-14)
    np.testing.assert_allclose(out.v[interior, 1:], 0.0, atol=1e-14)


def test_forms_coincide_for_constant_B(small_setup, rng):
    mesh, st, basis = small_setup
    v, _ = positive_state(rng, 8, 4)
    state = MomentField(v, np.full(8, 1.7))
    cfg = SolverConfig(0.99 * mesh.dx, 0.0)
    a = step_full_conservative(state, cfg, st, basis)
    b = step_full_advection(state, cfg, st, basis)
    np.testing.assert_allclose(a.v, b.v, atol=1e-13)
    np.testing.assert_allclose(a.B, b.B, atol=1e-13)


def test_energy_nonincreasing_plane_source():
    mesh = SpatialMesh(200, -10.0, 10.0)
    st, basis = build_stencils(mesh), AngularBasis.build(16)
    g = np.maximum(1e-4, np.exp(-(mesh.centers - 1) ** 2 / (2 * 0.03 ** 2))
                   / np.sqrt(2 * np.pi * 0.03 ** 2))
    v = np.zeros((200, 16))
    v[:, 0] = SQRT2 * g
    state = MomentField(v, np.ones(200))
    cfg = SolverConfig.from_cfl(mesh, 0.99, sigma=1.0)
    e_prev = state_energy(state)
    for _ in range(200):
        state = step_full_conservative(state, cfg, st, basis)
        e = state_energy(state)
        assert e <= e_prev * (1 + 1e-12)
        e_prev = e


@pytest.mark.parametrize("sigma", [0.0, 3.0])
def test_local_and_global_conservation(rng, sigma):
    mesh = SpatialMesh(16, 0.0, 2.0)
    st, basis = build_stencils(mesh), AngularBasis.build(6)
    v, B = positive_state(rng, 16, 6)
    state = MomentField(v, B)
    cfg = SolverConfig.from_cfl(mesh, 0.99, sigma=sigma)
    m0 = state_mass(state, mesh.dx)
    for _ in range(20):
        new = step_full_conservative(state, cfg, st, basis)
        rho_scale = np.abs(SQRT2 * B * v[:, 0] + B).max() / cfg.dt
        res = local_conservation_residual(state, new, cfg.dt, st, basis)
        assert np.abs(res).max() <= 1e-11 * rho_scale
        state = new
    assert abs(state_mass(state, mesh.dx) - m0) <= 1e-12 * abs(m0)


def test_cfl_warning(caplog):
    mesh = SpatialMesh(10, 0.0, 1.0)
    warn_if_unstable(SolverConfig(2 * mesh.dx), mesh)
    assert "exceeds" in caplog.text


def test_config_validation(small_setup):
    mesh = small_setup[0]
    with pytest.raises(ValueError):
        SolverConfig(0.0)
    with pytest.raises(ValueError):
        SolverConfig(0.1, sigma=-1.0)
    with pytest.raises(ValueError):
        SolverConfig.from_cfl(mesh, 1.5)
    assert SolverConfig.from_cfl(mesh, 0.99).dt == pytest.approx(0.99 * mesh.dx)


def test_per_cell_sigma(small_setup, rng):
    mesh, st, basis = small_setup
    v, B = positive_state(rng, 8, 4)
    sig = rng.uniform(0, 2, size=8)
    out = step_full_conservative(MomentField(v, B), SolverConfig(0.05, sig), st, basis)
    # each cell behaves as if it had its own scalar opacity
    for j in (0, 5):
        ref = step_full_conservative(MomentField(v, B), SolverConfig(0.05, sig[j]), st, basis)
        np.testing.assert_allclose(out.v[j], ref.v[j], atol=1e-14)


def test_solver_error_carries_stage(small_setup):
    mesh, st, basis = small_setup
    B = -np.ones(8)
    with pytest.raises(SolverError) as info:
        step_full_conservative(MomentField(np.ones((8, 4)), B), SolverConfig(0.1), st, basis)
    assert info.value.stage == "step_full_conservative"
    assert len(info.value.cells) == 8

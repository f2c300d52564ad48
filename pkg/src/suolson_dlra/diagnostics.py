"""Observables and balance-law residuals.

Functions taking ``state`` accept either a MomentField or a LowRankState;
only the columns that are needed get reconstructed.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .angular import evaluate_legendre

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    t: float
    energy: float
    mass: float
    rank: int
    max_conservation_residual: float
    min_B: float

    def as_row(self):
        return asdict(self)


def total_energy(v, B):
    """0.5 ||diag(B) v||_F^2 + 0.5 ||B||^2."""
    v = np.asarray(v, dtype=float)
    B = np.asarray(B, dtype=float)
    return 0.5 * float(np.sum((B[:, None] * v) ** 2)) + 0.5 * float(B @ B)


def state_energy(state):
    return 0.5 * state.u_norm_sq() + 0.5 * float(state.B @ state.B)


def cell_mass(v0, B):
    """rho_j = sqrt(2) B_j v_j0 + B_j."""
    return SQRT2 * np.asarray(B) * np.asarray(v0) + np.asarray(B)


def total_mass(v0_column, B, dx):
    return dx * float(np.sum(cell_mass(v0_column, B)))


def state_mass(state, dx):
    return total_mass(state.zeroth_moment(), state.B, dx)


def momentum(v, B, basis):
    """u_j = sqrt(2) B_j sum_l v_jl A_0l."""
    return SQRT2 * np.asarray(B) * (np.asarray(v) @ basis.A[0])


def scalar_flux(v, B):
    """Phi = <f>_mu / sqrt(2) = B v_0, since <P_0> = sqrt(2). Accepts v or its first column."""
    v = np.asarray(v)
    v0 = v[:, 0] if v.ndim == 2 else v
    return np.asarray(B) * v0


def temperature(B):
    return np.asarray(B, dtype=float) ** 0.25


def local_conservation_residual(state_before, state_after, dt, stencils, basis, source=None):
    """Residual of the discrete mass balance per cell (units of rho / time).

    (rho^1 - rho^0)/dt + sqrt(2) Dx(B0 v0 A_0.) - sqrt(2) Dxx(B0 v0 |A|_0.) - 2 Q
    """
    B0, B1 = state_before.B, state_after.B
    rho0 = cell_mass(state_before.zeroth_moment(), B0)
    rho1 = cell_mass(state_after.zeroth_moment(), B1)
    flux = B0 * state_before.contract(basis.A[0])
    stab = B0 * state_before.contract(basis.A_abs[0])
    rhs = -SQRT2 * stencils.Dx.apply(flux) + SQRT2 * stencils.Dxx.apply(stab)
    if source is not None:
        rhs = rhs + 2.0 * np.asarray(source, dtype=float)
    return (rho1 - rho0) / dt - rhs


def relative_conservation_residual(state_before, state_after, dt, stencils, basis, source=None):
    """max_j |residual_j| * dt / max_j |rho_j^0|, a dimensionless per-step measure."""
    res = local_conservation_residual(state_before, state_after, dt, stencils, basis, source)
    rho0 = cell_mass(state_before.zeroth_moment(), state_before.B)
    return float(np.max(np.abs(res)) * dt / np.max(np.abs(rho0)))


def evaluate_distribution(v, B, mu_points):
    """f(x_j, mu) = B_j sum_l v_jl P_l(mu), shape (Nx, len(mu_points))."""
    v = np.asarray(v, dtype=float)
    P = evaluate_legendre(v.shape[1], mu_points)
    return np.asarray(B)[:, None] * (v @ P.T)


def relative_l2(a, b):
    """||a - b|| / ||b||."""
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))

"""Full-rank time steppers for the multiplicatively split Su-Olson system.

The state holds the Legendre moments ``v`` of ``g`` (Nx x Nmu) and the
internal energy ``B`` (Nx,), with ``f = B g``. Transport is explicit Euler;
absorption/emission are implicit and resolved exactly per cell.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import DimensionError

log = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


class SolverError(RuntimeError):
    """A time step could not be completed.

    ``stage`` names the sub-step and ``cells`` lists the offending cells;
    the driver fills in ``step``.
    """

    def __init__(self, message, stage=None, cells=None, step=None):
        super().__init__(message)
        self.stage = stage
        self.cells = cells
        self.step = step


class NonPositiveEnergyError(SolverError):
    pass


def check_positive(B, stage="input"):
    B = np.asarray(B)
    bad = np.flatnonzero(~(B > 0))
    if bad.size:
        raise NonPositiveEnergyError(
            f"{stage}: internal energy B must be positive; first bad cell {bad[0]} "
            f"(B={B[bad[0]]!r}, {bad.size} cell(s) affected)", stage=stage, cells=bad)


@dataclass(frozen=True)
class MomentField:
    v: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if v.ndim != 2 or B.shape != (v.shape[0],):
            raise DimensionError(f"v {v.shape} and B {B.shape} are incompatible")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "B", B)

    @property
    def rank(self):
        return min(self.v.shape)

    def moments(self):
        return self.v

    def zeroth_moment(self):
        return self.v[:, 0]

    def contract(self, w):
        """v @ w for a vector (or matrix) over the moment index."""
        return self.v @ w

    def u_norm_sq(self):
        return float(np.sum((self.B[:, None] * self.v) ** 2))

    def state_floats(self):
        return self.v.size + self.B.size


@dataclass(frozen=True)
class SolverConfig:
    """Step size and opacity (scalar or per cell); ``source`` is an optional isotropic Q(x)."""

    dt: float
    sigma: object = 1.0
    source: object = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if np.any(np.asarray(self.sigma) < 0):
            raise ValueError("sigma must be nonnegative")

    @classmethod
    def from_cfl(cls, mesh, cfl, sigma=1.0, source=None):
        if not 0 < cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        return cls(dt=cfl * mesh.dx, sigma=sigma, source=source)

    def sigma_dt(self, n_cells):
        return np.broadcast_to(np.asarray(self.sigma, dtype=float) * self.dt, (n_cells,))


def warn_if_unstable(cfg, mesh):
    if cfg.dt > mesh.dx * (1 + 1e-14):
        log.warning("dt = %g exceeds dx = %g: energy stability is not guaranteed",
                    cfg.dt, mesh.dx)


def conservative_transport(B, v, stencils):
    """(1/B) Dx (B v) and (1/B) Dxx (B v), row-scaled."""
    Bv = B[:, None] * v if v.ndim == 2 else B * v
    inv = 1.0 / B if v.ndim == 1 else (1.0 / B)[:, None]
    return inv * stencils.Dx.apply(Bv), inv * stencils.Dxx.apply(Bv)


def source_term(cfg, B0):
    """Contribution dt * sqrt(2) Q / B0 to the undivided k = 0 right-hand side."""
    if cfg.source is None:
        return 0.0
    return cfg.dt * SQRT2 * np.asarray(cfg.source, dtype=float) / B0


def _explicit_undivided(state, cfg, stencils, basis):
    Wx, Wxx = conservative_transport(state.B, state.v, stencils)
    return state.v - cfg.dt * (Wx @ basis.A.T) + cfg.dt * (Wxx @ basis.A_abs.T)


def explicit_rhs_conservative(state, cfg, stencils, basis):
    """Explicit part C of the conservative update, already divided by 1 + sigma dt."""
    check_positive(state.B, "explicit_rhs")
    s = cfg.sigma_dt(state.v.shape[0])
    return _explicit_undivided(state, cfg, stencils, basis) / (1.0 + s)[:, None]


def solve_coupled_cell(C0, sigma, dt, q_term=0.0):
    """Exact solve of the per-cell k = 0 / internal-energy system.

    Unknowns are ``w = B1/B0`` and ``y = v1_0``; ``C0`` is the explicit k = 0
    part *before* division by ``1 + sigma dt``:

        w y (1 + s) = C0 + q_term + sqrt(2) s w,
        w = 1 + s w (sqrt(2) y - 2),          s = sigma dt.

    Eliminating ``w y`` gives w = (1 + s + sqrt(2) s (C0 + q)) / (1 + 3 s).
    Works elementwise on arrays. Raises NonPositiveEnergyError if w <= 0.
    """
    c = np.asarray(C0, dtype=float) + q_term
    s = np.asarray(sigma, dtype=float) * dt
    w = (1.0 + s + SQRT2 * s * c) / (1.0 + 3.0 * s)
    bad = np.flatnonzero(np.atleast_1d(~(w > 0)))
    if bad.size:
        raise NonPositiveEnergyError(
            f"coupled solve: B would become nonpositive in cell {bad[0]}",
            stage="coupled_solve", cells=bad)
    y = (c + SQRT2 * s * w) / (w * (1.0 + s))
    if np.ndim(w) == 0:
        return float(w), float(y)
    return w, y


def step_full_conservative(state, cfg, stencils, basis):
    """One step of the energy-stable conservative scheme."""
    check_positive(state.B, "step_full_conservative")
    n = state.v.shape[0]
    s = cfg.sigma_dt(n)
    E = _explicit_undivided(state, cfg, stencils, basis)
    w, y = solve_coupled_cell(E[:, 0], s, 1.0, source_term(cfg, state.B))
    v1 = E / ((1.0 + s) * w)[:, None]
    v1[:, 0] = y
    return MomentField(v1, w * state.B)


def _solve_advection_cells(E0, s):
    """Positive root w of (1+2s) w^2 + (s - 1 - sqrt(2) s E0) w - s = 0."""
    a = 1.0 + 2.0 * s
    b = s - 1.0 - SQRT2 * s * E0
    disc = np.sqrt(b * b + 4.0 * a * s)
    # cancellation-free branch selection
    w = np.where(b <= 0, (disc - b) / (2.0 * a), 2.0 * s / np.where(b > 0, b + disc, 1.0))
    bad = np.flatnonzero(~(w > 0))
    if bad.size:
        raise NonPositiveEnergyError(
            f"advection coupled solve: B would become nonpositive in cell {bad[0]}",
            stage="coupled_solve", cells=bad)
    return w


def step_full_advection(state, cfg, stencils, basis):
    """One step of the advection-form scheme (product rule split; not stable)."""
    check_positive(state.B, "step_full_advection")
    v, B, dt = state.v, state.B, cfg.dt
    n = v.shape[0]
    s = cfg.sigma_dt(n)
    dlogB = stencils.Dx.apply(B) / B
    E = (v - dt * (stencils.Dx.apply(v) @ basis.A.T)
         + dt * (stencils.Dxx.apply(v) @ basis.A_abs.T)
         - dt * ((dlogB[:, None] * v) @ basis.A.T))
    E[:, 0] += source_term(cfg, B)
    w = _solve_advection_cells(E[:, 0], s)
    v1 = E / (s + w)[:, None]
    v1[:, 0] = (E[:, 0] + SQRT2 * s) / (s + w)
    return MomentField(v1, w * B)

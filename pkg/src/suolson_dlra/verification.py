"""Dense reference oracles and the acceptance suites.

The oracles rebuild every operator as an explicit dense matrix and evaluate
the defining formulas literally (projection of the full explicit operator for
the low-rank substeps; a nonlinear root solve for the implicit coupling), so
they share no code path with the banded production kernels beyond the
stencil coefficients.

Each acceptance check returns an :class:`Outcome`. ``run_suite(name)`` runs a
named group; ``fast`` excludes the full-scale rank study, ``all`` includes it.
"""

import dataclasses
import filecmp
import functools
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import fsolve

from . import diagnostics as dg
from .angular import AngularBasis, evaluate_legendre
from .dlra import (LowRankState, TruncationConfig, augment_bases, k_step, l_step, s_step,
                   step_dlra)
from .experiments import ExperimentConfig, run_experiment, simulate, smooth_random_state
from .full import (MomentField, SolverConfig, step_full_advection, step_full_conservative)
from .mesh import SpatialMesh, build_stencils

SQRT2 = np.sqrt(2.0)


# -- dense oracles -------------------------------------------------------------

def dense_stencils(mesh):
    st = build_stencils(mesh)
    return st.Dx.dense(), st.Dxx.dense(), st.Dplus.dense()


def dense_explicit(v, B, dt, sigma, mesh, basis):
    """Explicit conservative operator C(v) = diag(d)(v - dt B^-1 Dx B v A^T + dt B^-1 Dxx B v |A|^T)."""
    Dx, Dxx, _ = dense_stencils(mesh)
    Binv, Bm = np.diag(1.0 / B), np.diag(B)
    d = 1.0 / (1.0 + sigma * dt)
    return d * (v - dt * Binv @ Dx @ Bm @ v @ basis.A.T + dt * Binv @ Dxx @ Bm @ v @ basis.A_abs.T)


def oracle_k_step(state, dt, sigma, mesh, basis):
    """K* = C(K0 V0^T) V0."""
    K0 = state.X @ state.S
    return np.einsum("jk,km->jm", dense_explicit(K0 @ state.V.T, state.B, dt, sigma, mesh, basis),
                     state.V)


def oracle_l_step(state, dt, sigma, mesh, basis):
    """L* = C(X0 L0^T)^T X0."""
    L0 = state.V @ state.S.T
    return np.einsum("jk,jm->km", dense_explicit(state.X @ L0.T, state.B, dt, sigma, mesh, basis),
                     state.X)


def oracle_s_step(S_tilde, X_hh, V_hh, B, dt, sigma, mesh, basis):
    """S* = X^T C(X S~ V^T) V."""
    C = dense_explicit(X_hh @ S_tilde @ V_hh.T, B, dt, sigma, mesh, basis)
    return np.einsum("jm,jk,kn->mn", X_hh, C, V_hh)


def _solve_cells(residual, n_cells):
    """Solve a per-cell 2x2 nonlinear system with fsolve, starting from (w, y) = (1, 0)."""
    x0 = np.concatenate([np.ones(n_cells), np.zeros(n_cells)])
    sol, info, ier, msg = fsolve(residual, x0, full_output=True, xtol=1e-15)
    # fsolve may report that xtol cannot be met once it sits at roundoff level
    if np.abs(residual(sol)).max() > 1e-13:
        raise RuntimeError(f"oracle root solve failed: {msg}")
    return sol[:n_cells], sol[n_cells:]


def oracle_full_conservative(v, B, dt, sigma, mesh, basis, Q=None):
    """One conservative step from the implicit cell equations, written in B1 and u1 = B1 v1:

        (1 + s) B1 v1_k = B0 E_k                           (k >= 1)
        B1 y = B0 (E_0 + q) + s (sqrt(2) B1 - B1 y)
        B1 = B0 + s (sqrt(2) B1 y - 2 B1)

    with E the undivided explicit part and q the isotropic source term.
    """
    s = sigma * dt
    E = dense_explicit(v, B, dt, sigma, mesh, basis) * (1.0 + s)
    q = 0.0 if Q is None else dt * SQRT2 * Q / B
    n = B.size

    def residual(z):
        B1, y = z[:n] * B, z[n:]
        r1 = B1 * y - B * (E[:, 0] + q) - s * (SQRT2 * B1 - B1 * y)
        r2 = B1 - B - s * (SQRT2 * B1 * y - 2.0 * B1)
        return np.concatenate([r1, r2])

    w, y = _solve_cells(residual, n)
    B1 = w * B
    v1 = (B / B1)[:, None] * E / (1.0 + s)
    v1[:, 0] = y
    return v1, B1


def oracle_full_advection(v, B, dt, sigma, mesh, basis):
    """One advection-form step; the coupling equations are
    v1_k (s + w) = E_k, v1_0 (s + w) = E_0 + sqrt(2) s, w = 1 + s w (sqrt(2) v1_0 - 2)."""
    Dx, Dxx, _ = dense_stencils(mesh)
    s = sigma * dt
    dlogB = (Dx @ B) / B
    E = (v - dt * Dx @ v @ basis.A.T + dt * Dxx @ v @ basis.A_abs.T
         - dt * np.diag(dlogB) @ v @ basis.A.T)
    n = B.size

    def residual(z):
        w, y = z[:n], z[n:]
        return np.concatenate([y * (s + w) - E[:, 0] - SQRT2 * s,
                               w - 1.0 - s * w * (SQRT2 * y - 2.0)])

    w, y = _solve_cells(residual, n)
    v1 = E / (s + w)[:, None]
    v1[:, 0] = y
    return v1, w * B


def quadrature_flux_matrix(n_moments, n_nodes=64):
    """<P_k, mu P_l> by Gauss-Legendre quadrature."""
    mu, wts = np.polynomial.legendre.leggauss(n_nodes)
    P = evaluate_legendre(n_moments, mu)
    return np.einsum("q,qk,ql->kl", wts * mu, P, P)


# -- random instances ---------------------------------------------------------------

def random_instance(rng, n_cells, n_moments, x_right=1.0):
    mesh = SpatialMesh(n_cells, 0.0, x_right)
    v, B = smooth_random_state(rng, mesh, n_moments)
    return mesh, v, B


def random_low_rank(rng, n_cells, n_moments, rank):
    mesh, v, B = random_instance(rng, n_cells, n_moments)
    v = v + 0.1 * rng.normal(size=v.shape)
    return mesh, LowRankState.from_moments(v, B, rank)


# -- outcomes --------------------------------------------------------------------------

@dataclass
class Outcome:
    criterion: int
    name: str
    passed: bool
    detail: str
    runtime: float
    limit: float = None

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        lim = f" (limit {self.limit:g} s)" if self.limit else ""
        return (f"[{status}] criterion {self.criterion:2d} {self.name}: {self.detail}; "
                f"runtime {self.runtime:.2f} s{lim}")


def _timed(criterion, name, limit):
    def wrap(fn):
        @functools.wraps(fn)
        def run():
            start = time.perf_counter()
            ok, detail = fn()
            elapsed = time.perf_counter() - start
            in_time = limit is None or elapsed < limit
            if not in_time:
                detail += "; exceeded runtime limit"
            return Outcome(criterion, name, bool(ok and in_time), detail, elapsed, limit)
        run.criterion = criterion
        return run
    return wrap


# -- criteria --------------------------------------------------------------------------

@_timed(1, "stencil identities", 1.0)
def check_stencil_identities(seed=1, n_pairs=100):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for nx in range(3, 17):
        Dx, Dxx, Dp = dense_stencils(SpatialMesh(nx, 0.0, 1.0))
        scale = np.abs(Dxx).max()
        worst = max(worst, np.abs(Dp.T @ Dp + Dxx).max() / scale)
        for _ in range(n_pairs):
            y, z = rng.normal(size=nx), rng.normal(size=nx)
            norm = scale * np.linalg.norm(y) * np.linalg.norm(z)
            worst = max(worst,
                        abs(y @ Dx @ z + z @ Dx @ y) / norm,
                        abs(z @ Dx @ z) / (scale * z @ z),
                        abs(y @ Dxx @ z - z @ Dxx @ y) / norm,
                        abs(z @ Dxx @ z + np.sum((Dp @ z) ** 2)) / (scale * z @ z))
    return worst <= 1e-13, f"worst relative defect {worst:.2e} (tol 1e-13)"


@_timed(2, "flux matrix vs quadrature", 5.0)
def check_flux_matrix():
    worst_a = worst_abs = 0.0
    for n in range(1, 65):
        b = AngularBasis.build(n)
        worst_a = max(worst_a, np.abs(b.A - quadrature_flux_matrix(n)).max())
        worst_abs = max(worst_abs, np.abs(b.A_abs @ b.A_abs - b.A @ b.A).max())
    ok = worst_a <= 1e-13 and worst_abs <= 1e-12
    return ok, f"max |A - quad| {worst_a:.2e} (tol 1e-13), max ||A|^2 - A^2| {worst_abs:.2e} (tol 1e-12)"


SIGMAS = (0.0, 0.5, 1.0, 10.0)


def energy_sweep(stepper, n_steps=200, seed=3, n_cells=64, n_moments=16):
    """Worst per-step relative energy increase over 20 random runs (5 per opacity)."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for sigma in SIGMAS:
        for _ in range(5):
            mesh, v, B = random_instance(rng, n_cells, n_moments)
            stencils, basis = build_stencils(mesh), AngularBasis.build(n_moments)
            cfg = SolverConfig.from_cfl(mesh, 0.99, sigma=sigma)
            state = stepper.init(v, B)
            e_prev = dg.state_energy(state)
            for _ in range(n_steps):
                state = stepper.step(state, cfg, stencils, basis)
                e = dg.state_energy(state)
                worst = max(worst, (e - e_prev) / e_prev)
                e_prev = e
    return worst


class _FullStepper:
    init = staticmethod(MomentField)
    step = staticmethod(step_full_conservative)


class _DlraStepper:
    tc = TruncationConfig(theta=1e-2, mode="relative", r_max=16)

    @staticmethod
    def init(v, B):
        return LowRankState.from_moments(v, B, 8)

    @classmethod
    def step(cls, state, cfg, stencils, basis):
        return step_dlra(state, cfg, cls.tc, stencils, basis)


@_timed(3, "energy stability, full conservative", 30.0)
def check_energy_full():
    worst = energy_sweep(_FullStepper)
    return worst <= 1e-12, f"max per-step relative energy change {worst:.2e} (tol 1e-12)"


def instability_setup(n_cells=128, n_moments=8):
    mesh = SpatialMesh(n_cells, 0.0, 1.0)
    B = 1.0 + 0.5 * np.sin(2 * np.pi * mesh.centers / mesh.length)
    v = np.ones((n_cells, n_moments))
    return mesh, v, B


def instability_run(n_steps=2000):
    """Return (advection growth factor of 1/2||u||^2, conservative max per-step relative change)."""
    mesh, v, B = instability_setup()
    stencils, basis = build_stencils(mesh), AngularBasis.build(v.shape[1])
    cfg = SolverConfig.from_cfl(mesh, 0.99, sigma=0.0)
    adv = cons = MomentField(v, B)
    e0 = 0.5 * adv.u_norm_sq()
    growth, cons_worst = 1.0, -np.inf
    e_cons = dg.state_energy(cons)
    for _ in range(n_steps):
        adv = step_full_advection(adv, cfg, stencils, basis)
        growth = max(growth, 0.5 * adv.u_norm_sq() / e0)
        cons = step_full_conservative(cons, cfg, stencils, basis)
        e = dg.state_energy(cons)
        cons_worst = max(cons_worst, (e - e_cons) / e_cons)
        e_cons = e
    return growth, cons_worst


@_timed(4, "instability of advection form", 20.0)
def check_instability():
    growth, cons_worst = instability_run()
    ok = growth >= 10.0 and cons_worst <= 1e-12
    return ok, (f"advection energy growth x{growth:.3g} in 2000 steps (need >= 10); "
                f"conservative max per-step change {cons_worst:.2e} (tol 1e-12)")


def full_rank_gap(seed=5, n_cases=20, n_steps=10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        nx, nmu = int(rng.integers(3, 17)), int(rng.integers(1, 9))
        mesh, v, B = random_instance(rng, nx, nmu)
        stencils, basis = build_stencils(mesh), AngularBasis.build(nmu)
        cfg = SolverConfig.from_cfl(mesh, 0.99, sigma=float(rng.choice(SIGMAS)))
        r = min(nx, nmu)
        tc = TruncationConfig(theta=0.0, r_max=r)
        full, low = MomentField(v, B), LowRankState.from_moments(v, B, r)
        for _ in range(n_steps):
            full = step_full_conservative(full, cfg, stencils, basis)
            low = step_dlra(low, cfg, tc, stencils, basis)
        worst = max(worst, np.abs(low.moments() - full.v).max(), np.abs(low.B - full.B).max())
    return worst


@_timed(5, "full-rank equivalence", 10.0)
def check_full_rank():
    worst = full_rank_gap()
    return worst <= 1e-11, f"max entrywise gap {worst:.2e} (tol 1e-11)"


def oracle_gaps(seed=7, n_cases=10):
    """Worst relative gaps (K, L, S) between production kernels and dense oracles."""
    rng = np.random.default_rng(seed)
    gaps = np.zeros(3)
    for _ in range(n_cases):
        nx, nmu = int(rng.integers(6, 17)), int(rng.integers(4, 11))
        r = int(rng.integers(1, min(nx, nmu) // 2 + 1))
        mesh, state = random_low_rank(rng, nx, nmu, r)
        stencils, basis = build_stencils(mesh), AngularBasis.build(nmu)
        sigma = float(rng.choice(SIGMAS))
        cfg = SolverConfig.from_cfl(mesh, 0.99, sigma=sigma)
        dt = cfg.dt
        K = k_step(state, cfg, stencils, basis)
        L = l_step(state, cfg, stencils, basis)
        X_hh, V_hh, M, N = augment_bases(state, K, L, stencils, basis)
        S_tilde = M @ state.S @ N.T
        S = s_step(S_tilde, X_hh, V_hh, state.B, cfg, stencils, basis)
        refs = (oracle_k_step(state, dt, sigma, mesh, basis),
                oracle_l_step(state, dt, sigma, mesh, basis),
                oracle_s_step(S_tilde, X_hh, V_hh, state.B, dt, sigma, mesh, basis))
        for i, (got, ref) in enumerate(zip((K, L, S), refs)):
            gaps[i] = max(gaps[i], np.abs(got - ref).max() / max(np.abs(ref).max(), 1e-300))
    return gaps


@_timed(6, "K/L/S steps vs dense oracles", 5.0)
def check_oracles():
    gaps = oracle_gaps()
    return bool(np.all(gaps <= 1e-12)), (
        "relative gaps K {:.2e}, L {:.2e}, S {:.2e} (tol 1e-12)".format(*gaps))


def desk_plane_source(**overrides):
    base = dataclasses.replace(ExperimentConfig.preset("plane_source"), n_cells=400,
                               n_moments=100, plots=False)
    return dataclasses.replace(base, **overrides)


@functools.lru_cache(maxsize=None)
def _desk_run(solver, theta):
    return simulate(desk_plane_source(solver=solver, theta=theta))


@_timed(7, "mass conservation, desk plane source", 300.0)
def check_mass():
    parts, ok = [], True
    for solver in ("full", "dlra"):
        res = _desk_run(solver, 0.1)
        drift, resid = res.mass_drift, res.max_residual
        ok &= drift <= 1e-11 and resid <= 1e-10
        parts.append(f"{solver}: drift {drift:.2e}, max residual {resid:.2e}")
    return ok, "; ".join(parts) + " (tol 1e-11 / 1e-10)"


@_timed(8, "energy stability, DLRA", 60.0)
def check_energy_dlra():
    worst = energy_sweep(_DlraStepper)
    return worst <= 1e-12, f"max per-step relative energy change {worst:.2e} (tol 1e-12)"


@_timed(9, "rank behavior, full scale", None)
def check_rank():
    plane = simulate(dataclasses.replace(ExperimentConfig.preset("plane_source"), plots=False))
    ext = simulate(dataclasses.replace(ExperimentConfig.preset("external_source"), plots=False))
    p_max, p_final, e_max = plane.max_rank, plane.records[-1].rank, ext.max_rank
    ok = p_max <= 25 and p_final < 10 and e_max <= 25
    return ok, (f"plane source max rank {p_max} (<= 25), final {p_final} (< 10); "
                f"external source max rank {e_max} (<= 25)")


@_timed(10, "scalar flux accuracy, desk plane source", 300.0)
def check_accuracy():
    full, low = _desk_run("full", 0.1), _desk_run("dlra", 1e-3)
    phi = lambda r: dg.scalar_flux(r.final_state.moments(), r.final_state.B)
    err = dg.relative_l2(phi(low), phi(full))
    return err <= 2e-2, f"relative L2 gap {err:.2e} (tol 2e-2)"


def reproducibility_config(out_dir, solver):
    return dataclasses.replace(ExperimentConfig.preset("custom"), solver=solver, t_end=0.25,
                               snapshot_times=(0.1,), output_dir=str(out_dir), plots=False,
                               rng_seed=11)


@_timed(11, "reproducibility", None)
def check_reproducibility():
    differing = []
    with tempfile.TemporaryDirectory() as tmp:
        for solver in ("full", "advection", "dlra"):
            dirs = [Path(tmp) / f"{solver}{i}" for i in range(2)]
            for d in dirs:
                run_experiment(reproducibility_config(d, solver))
            names = sorted(p.name for p in dirs[0].glob("*.csv"))
            _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
            differing += [f"{solver}/{n}" for n in mismatch + errors]
    return not differing, ("all CSV files byte-identical" if not differing
                           else "differing: " + ", ".join(differing))


CHECKS = (check_stencil_identities, check_flux_matrix, check_energy_full, check_instability,
          check_full_rank, check_oracles, check_mass, check_energy_dlra, check_rank,
          check_accuracy, check_reproducibility)

SUITES = {
    "stencils": (check_stencil_identities,),
    "flux": (check_flux_matrix,),
    "energy": (check_energy_full, check_energy_dlra),
    "instability": (check_instability,),
    "equivalence": (check_full_rank, check_oracles),
    "conservation": (check_mass,),
    "rank": (check_rank,),
    "accuracy": (check_accuracy,),
    "reproducibility": (check_reproducibility,),
    "fast": tuple(c for c in CHECKS if c is not check_rank),
    "all": CHECKS,
}


def run_suite(name):
    return [check() for check in SUITES[name]]

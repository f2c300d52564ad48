"""Energy-stable, mass-conservative augmented BUG stepper.

One step maps (X0, S0, V0, B0) to (X1, S1, V1, B1):

1. K- and L-steps with the explicit conservative right-hand side;
2. basis augmentation to [K*, X0] then [., (1/B0) Dx(B0 X0)] (and
   [L*, V0] then [., A^T V0]) so the projected transport is exact;
3. Galerkin S-step in the augmented bases;
4. exact per-cell solve for the zeroth moment and B1;
5. division by B1/B0 and augmentation with v0^1 and e_1, after which an
   S-correction re-inserts the exact zeroth moment;
6. truncation, optionally keeping the zeroth moment untouched.

When the augmented stacks have more columns than rows the bases simply span
the whole space, so coefficient matrices inside a step may be rectangular.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .full import (SolverError, check_positive, conservative_transport,
                   solve_coupled_cell, source_term)
from .linalg import DimensionError, LinalgError, orthonormal_basis, qr_orthonormalize, svd

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-10

CLAMP_MESSAGE = "truncation rank %d exceeds r_max=%d; clamping"


def _warn_clamp(rank, r_max):
    log.warning(CLAMP_MESSAGE, rank, r_max)


def _ortho_defect(Q):
    r = Q.shape[1]
    return float(np.max(np.abs(Q.T @ Q - np.eye(r)), initial=0.0))


@dataclass(frozen=True)
class LowRankState:
    """Factored moments v = X S V^T plus internal energy B."""

    X: np.ndarray
    S: np.ndarray
    V: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        X, S, V, B = (np.asarray(a, dtype=float) for a in (self.X, self.S, self.V, self.B))
        r = X.shape[1]
        if S.shape != (r, r) or V.shape[1] != r or B.shape != (X.shape[0],):
            raise DimensionError(
                f"inconsistent factors X{X.shape} S{S.shape} V{V.shape} B{B.shape}")
        if not 1 <= r <= min(X.shape[0], V.shape[0]):
            raise DimensionError(f"rank {r} outside [1, min(Nx, Nmu)]")
        for name, a in zip("XSVB", (X, S, V, B)):
            object.__setattr__(self, name, a)

    @classmethod
    def from_moments(cls, v, B, rank):
        """Rank-``rank`` factorization of ``v``; null directions are completed
        deterministically by the SVD's orthonormal bases."""
        v = np.asarray(v, dtype=float)
        rank = int(rank)
        if not 1 <= rank <= min(v.shape):
            raise ValueError(f"rank must lie in [1, {min(v.shape)}]")
        U, s, W = svd(v)
        return cls(U[:, :rank].copy(), np.diag(s[:rank]), W[:, :rank].copy(), B)

    @property
    def rank(self):
        return self.X.shape[1]

    def moments(self):
        return self.X @ self.S @ self.V.T

    def zeroth_moment(self):
        return self.X @ (self.S @ self.V[0])

    def contract(self, w):
        return self.X @ (self.S @ (self.V.T @ w))

    def u_norm_sq(self):
        # V has orthonormal columns
        return float(np.sum((self.B[:, None] * (self.X @ self.S)) ** 2))

    def state_floats(self):
        r = self.rank
        return r * (self.X.shape[0] + self.V.shape[0] + r) + self.B.size

    def orthonormality_defect(self):
        return max(_ortho_defect(self.X), _ortho_defect(self.V))

    def reorthonormalized(self):
        """Return an equivalent state whose bases are orthonormal to roundoff."""
        if self.orthonormality_defect() <= ORTHO_TOL:
            return self
        X, Rx = qr_orthonormalize(self.X)
        V, Rv = qr_orthonormalize(self.V)
        return LowRankState(X, Rx @ self.S @ Rv.T, V, self.B)


MODE_ALIASES = {"relative": "relative", "relative_to_sigma_norm": "relative",
                "absolute": "absolute"}


@dataclass(frozen=True)
class TruncationConfig:
    """Rank truncation settings.

    ``mode='relative'`` scales ``theta`` by the Euclidean norm of the
    singular values being truncated; ``mode='absolute'`` uses ``theta`` as is.
    """

    theta: float = 0.0
    mode: str = "relative"
    r_max: int = None
    conservative: bool = True

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        mode = MODE_ALIASES.get(self.mode)
        if mode is None:
            raise ValueError(f"mode must be one of {sorted(MODE_ALIASES)}")
        object.__setattr__(self, "mode", mode)
        if self.r_max is not None and self.r_max < 1:
            raise ValueError("r_max must be >= 1")

    def tolerance(self, s):
        return self.theta * float(np.linalg.norm(s)) if self.mode == "relative" else self.theta

    def resolve_r_max(self, n_cells, n_moments):
        cap = min(n_cells, n_moments)
        if self.r_max is None:
            return max(1, cap // 2)
        if self.r_max > cap:
            log.warning("r_max=%d exceeds min(Nx, Nmu)=%d; using %d", self.r_max, cap, cap)
            return cap
        return self.r_max


def _row_scale(cfg, n):
    return 1.0 / (1.0 + cfg.sigma_dt(n))


def k_step(state, cfg, stencils, basis):
    """K* = X^T-free Galerkin update of K0 = X0 S0 with V0 frozen (Nx x r)."""
    X, S, V, B = state.X, state.S, state.V, state.B
    K0 = X @ S
    Yx, Yxx = conservative_transport(B, K0, stencils)
    VAV = V.T @ basis.A.T @ V
    VAabsV = V.T @ basis.A_abs.T @ V
    d = _row_scale(cfg, X.shape[0])[:, None]
    return d * (K0 - cfg.dt * (Yx @ VAV) + cfg.dt * (Yxx @ VAabsV))


def _spatial_galerkin(Xleft, Xright, B, d, stencils):
    """Xleft^T diag(d) Xright and the same with (1/B) Dx(B .), (1/B) Dxx(B .) applied to Xright."""
    Yx, Yxx = conservative_transport(B, Xright, stencils)
    dX = d[:, None] * Xleft
    return dX.T @ Xright, dX.T @ Yx, dX.T @ Yxx


def l_step(state, cfg, stencils, basis):
    """L* = C(X0 L0^T)^T X0 with L0 = V0 S0^T (Nmu x r)."""
    X, S, V, B = state.X, state.S, state.V, state.B
    L0 = V @ S.T
    d = _row_scale(cfg, X.shape[0])
    G0, Gx, Gxx = _spatial_galerkin(X, X, B, d, stencils)
    return L0 @ G0 - cfg.dt * (basis.A @ L0 @ Gx.T) + cfg.dt * (basis.A_abs @ L0 @ Gxx.T)


def augment_bases(state, K_star, L_star, stencils, basis):
    """Return (X_hh, V_hh, M_hh, N_hh) after both augmentation stages."""
    X, V, B = state.X, state.V, state.B
    X_h = orthonormal_basis(np.hstack([K_star, X]))
    dX, _ = conservative_transport(B, X, stencils)
    X_hh = orthonormal_basis(np.hstack([X_h, dX]))
    V_h = orthonormal_basis(np.hstack([L_star, V]))
    V_hh = orthonormal_basis(np.hstack([V_h, basis.A.T @ V]))
    return X_hh, V_hh, X_hh.T @ X, V_hh.T @ V


def s_step(S_tilde, X_hh, V_hh, B, cfg, stencils, basis):
    """Galerkin update of the augmented coefficient matrix."""
    d = _row_scale(cfg, X_hh.shape[0])
    G0, Gx, Gxx = _spatial_galerkin(X_hh, X_hh, B, d, stencils)
    VAV = V_hh.T @ basis.A.T @ V_hh
    VAabsV = V_hh.T @ basis.A_abs.T @ V_hh
    return G0 @ S_tilde - cfg.dt * (Gx @ S_tilde @ VAV) + cfg.dt * (Gxx @ S_tilde @ VAabsV)


def coupled_update_k0(state, S_tilde, X_hh, V_hh, cfg, stencils, basis):
    """Zeroth moment and internal energy at the new time: returns (B1, v0_1)."""
    B = state.B
    XS = X_hh @ S_tilde
    flux0 = XS @ (V_hh.T @ basis.A[0])
    stab0 = XS @ (V_hh.T @ basis.A_abs[0])
    Bf = B * flux0
    Bs = B * stab0
    C0 = (state.zeroth_moment()
          - cfg.dt * stencils.Dx.apply(Bf) / B
          + cfg.dt * stencils.Dxx.apply(Bs) / B)
    w, y = solve_coupled_cell(C0, cfg.sigma_dt(B.size), 1.0, source_term(cfg, B))
    return w * B, y


def transform_and_augment(K_star, B0, B1, v0_1, V_hh):
    """Divide out B1/B0 and add v0^1 / e_1 to the bases with a matching S correction.

    Returns (X_hh1, S_hh1, V_hh1); the reconstruction's first moment column
    equals ``v0_1``.
    """
    check_positive(B1, "transform_and_augment")
    K_trans = (B0 / B1)[:, None] * K_star
    X_trans, S_trans = qr_orthonormalize(K_trans)
    X1 = orthonormal_basis(np.hstack([v0_1[:, None], X_trans]))
    e1 = np.zeros((V_hh.shape[0], 1))
    e1[0, 0] = 1.0
    V1 = orthonormal_basis(np.hstack([e1, V_hh]))
    # V_hh^T (I - e1 e1^T) V1
    VV = V_hh.T @ V1 - np.outer(V_hh[0], V1[0])
    S1 = (X1.T @ X_trans) @ S_trans @ VV + np.outer(X1.T @ v0_1, V1[0])
    return X1, S1, V1


def _truncation_rank(s, tol):
    """Smallest r with sqrt(sum_{j >= r} s_j^2) <= tol."""
    tail = np.sqrt(np.cumsum((s ** 2)[::-1]))[::-1]
    keep = np.flatnonzero(tail > tol)
    return int(keep[-1]) + 1 if keep.size else 0


def _compress_to_square(X, S, V):
    """Exact SVD recompression when S is rectangular."""
    P, s, Q = svd(S)
    r = s.size
    return X @ P, np.diag(s), V @ Q[:, :r]


def truncate_conservative(X_hh1, S_hh1, V_hh1, tc):
    """Truncate the augmented factors; returns (X1, S1, V1).

    With ``tc.conservative`` the first column of V_hh1 (e_1) and its K
    column are exempt from truncation, so the zeroth moment is unchanged.
    """
    n_x, n_mu = X_hh1.shape[0], V_hh1.shape[0]
    r_max = tc.resolve_r_max(n_x, n_mu)
    K = X_hh1 @ S_hh1
    if not tc.conservative:
        P, s, Q = svd(S_hh1)
        r1 = max(1, _truncation_rank(s, tc.tolerance(s)))
        if r1 > r_max:
            _warn_clamp(r1, r_max)
            r1 = r_max
        return X_hh1 @ P[:, :r1], np.diag(s[:r1]), V_hh1 @ Q[:, :r1]

    K_cons, K_rem = K[:, 0], K[:, 1:]
    V_rem = V_hh1[:, 1:]
    s_cons = float(np.linalg.norm(K_cons))
    if s_cons > 0:
        X_cons = K_cons / s_cons
    else:
        X_cons = np.zeros(n_x)
        X_cons[0] = 1.0
    if K_rem.shape[1]:
        X_rem, S_rem = qr_orthonormalize(K_rem)
        P, s, Q = svd(S_rem)
        # keep one remainder direction even when everything is below tolerance
        r1 = max(1, _truncation_rank(s, tc.tolerance(s)))
    else:
        s = np.zeros(0)
        r1 = 0
    # at r_max == min(Nx, Nmu) the final recompression already bounds the rank
    if 1 + r1 > r_max and r_max < min(n_x, n_mu):
        _warn_clamp(1 + r1, r_max)
        r1 = r_max - 1
    e1 = np.zeros(n_mu)
    e1[0] = 1.0
    if r1:
        X_t = np.column_stack([X_cons, X_rem @ P[:, :r1]])
        V_t = np.column_stack([e1, V_rem @ Q[:, :r1]])
    else:
        X_t, V_t = X_cons[:, None], e1[:, None]
    core = np.zeros((1 + r1, 1 + r1))
    core[0, 0] = s_cons
    core[1:, 1:] = np.diag(s[:r1])
    X1, R1 = qr_orthonormalize(X_t)
    V1, R2 = qr_orthonormalize(V_t)
    S1 = R1 @ core @ R2.T
    if S1.shape[0] != S1.shape[1]:
        X1, S1, V1 = _compress_to_square(X1, S1, V1)
    return X1, S1, V1


def step_dlra(state, cfg, tc, stencils, basis):
    """Advance a LowRankState by one time step."""
    def stage(name, fn, *args):
        try:
            return fn(*args)
        except (SolverError, LinalgError) as exc:
            cells = getattr(exc, "cells", None)
            raise SolverError(f"{name}: {exc}", stage=name, cells=cells) from exc

    check_positive(state.B, "step_dlra")
    K_star = stage("k_step", k_step, state, cfg, stencils, basis)
    L_star = stage("l_step", l_step, state, cfg, stencils, basis)
    X_hh, V_hh, M_hh, N_hh = stage("augment_bases", augment_bases,
                                   state, K_star, L_star, stencils, basis)
    S_tilde = M_hh @ state.S @ N_hh.T
    S_star = stage("s_step", s_step, S_tilde, X_hh, V_hh, state.B, cfg, stencils, basis)
    B1, v0_1 = stage("coupled_update_k0", coupled_update_k0,
                     state, S_tilde, X_hh, V_hh, cfg, stencils, basis)
    X1, S1, V1 = stage("transform_and_augment", transform_and_augment,
                       X_hh @ S_star, state.B, B1, v0_1, V_hh)
    X, S, V = stage("truncate", truncate_conservative, X1, S1, V1, tc)
    out = LowRankState(X, S, V, B1)
    if not np.all(np.isfinite(out.S)):
        raise SolverError("non-finite coefficients after truncation", stage="truncate")
    return out.reorthonormalized()

"""Normalized Legendre (PN) machinery for the directional variable mu in [-1, 1].

The polynomials are normalized so that ``int P_k P_l dmu = delta_kl``; in
particular ``P_0 = 1/sqrt(2)``.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import DimensionError, symmetric_eig


def _recurrence_coeffs(n):
    """a_l = l / sqrt((2l-1)(2l+1)) for l = 1..n, so mu P_l = a_{l+1} P_{l+1} + a_l P_{l-1}."""
    ell = np.arange(1, n + 1, dtype=float)
    return ell / np.sqrt((2 * ell - 1) * (2 * ell + 1))


def build_flux_matrix(n_moments):
    """Tridiagonal A with A[k, l] = <P_k, mu P_l>."""
    if n_moments < 1:
        raise ValueError("n_moments must be >= 1")
    off = _recurrence_coeffs(n_moments - 1)
    return np.diag(off, 1) + np.diag(off, -1)


def build_abs_matrices(A):
    """Return (|A|, |A|^(1/2)) from the eigendecomposition of symmetric A."""
    Q, lam = symmetric_eig(A)
    mag = np.abs(lam)
    A_abs = (Q * mag) @ Q.T
    A_abs_sqrt = (Q * np.sqrt(mag)) @ Q.T
    # symmetrize away roundoff
    return 0.5 * (A_abs + A_abs.T), 0.5 * (A_abs_sqrt + A_abs_sqrt.T)


def evaluate_legendre(n_moments, mu_points):
    """Matrix of shape (len(mu_points), n_moments); column l holds P_l(mu)."""
    if n_moments < 1:
        raise ValueError("n_moments must be >= 1")
    mu = np.atleast_1d(np.asarray(mu_points, dtype=float))
    if mu.ndim != 1:
        raise DimensionError("mu_points must be one-dimensional")
    if np.any(np.abs(mu) > 1.0) or not np.all(np.isfinite(mu)):
        raise ValueError("all mu points must lie in [-1, 1]")
    a = _recurrence_coeffs(n_moments)
    P = np.empty((mu.size, n_moments))
    P[:, 0] = 1.0 / np.sqrt(2.0)
    if n_moments > 1:
        P[:, 1] = mu * P[:, 0] / a[0]
    for ell in range(1, n_moments - 1):
        P[:, ell + 1] = (mu * P[:, ell] - a[ell - 1] * P[:, ell - 1]) / a[ell]
    return P


@dataclass(frozen=True)
class AngularBasis:
    n_moments: int
    A: np.ndarray
    A_abs: np.ndarray
    A_abs_sqrt: np.ndarray

    @classmethod
    def build(cls, n_moments):
        A = build_flux_matrix(n_moments)
        A_abs, A_abs_sqrt = build_abs_matrices(A)
        for M in (A, A_abs, A_abs_sqrt):
            M.setflags(write=False)
        return cls(n_moments, A, A_abs, A_abs_sqrt)

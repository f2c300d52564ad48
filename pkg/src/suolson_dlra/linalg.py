"""Dense factorizations with fixed sign conventions.

Thin wrappers around LAPACK (via scipy) that enforce shape checks, finiteness
and deterministic signs so that downstream results are reproducible:

* QR: the diagonal of ``R`` is nonnegative.
* SVD and symmetric eigendecomposition: in every returned vector the entry of
  largest magnitude (first one on ties) is positive.

Matrices are plain ``numpy.ndarray`` objects (C order).
"""

import numpy as np
import scipy.linalg as sla


class LinalgError(RuntimeError):
    """A factorization failed or was given unusable input."""


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


def _as_matrix(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise LinalgError(f"{name} contains non-finite entries")
    return M


def _fix_vector_signs(Q):
    """Flip columns of Q so the largest-magnitude entry of each is positive."""
    if Q.size == 0:
        return np.ones(Q.shape[1])
    idx = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[idx, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def qr_orthonormalize(M):
    """Householder QR ``M = Q R`` with ``Q`` of shape n x min(n, k).

    Rank-deficient columns are handled by the Householder reflectors
    themselves: ``Q`` always has orthonormal columns and ``span(M)`` is
    contained in ``span(Q)``. For wide input (k > n) the result spans all of
    R^n and ``R`` is n x k.
    """
    M = _as_matrix(M)
    n, k = M.shape
    if n == 0:
        raise DimensionError("cannot orthonormalize a matrix with zero rows")
    if k == 0:
        return np.zeros((n, 0)), np.zeros((0, 0))
    try:
        Q, R = sla.qr(M, mode="economic", check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinalgError(f"QR failed: {exc}") from exc
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    Q = Q * d
    R = R * d[:, None]
    return Q, R


def orthonormal_basis(M):
    """Orthonormal ``Q`` with ``span(M) <= span(Q)``; drops ``R``."""
    return qr_orthonormalize(M)[0]


def svd(M):
    """Thin SVD ``M = U diag(s) W^T`` with ``s`` descending.

    Falls back from the divide-and-conquer driver to the QR-iteration driver
    before giving up with :class:`LinalgError`.
    """
    M = _as_matrix(M)
    if 0 in M.shape:
        m, n = M.shape
        p = min(m, n)
        return np.zeros((m, p)), np.zeros(p), np.zeros((n, p))
    U = None
    for driver in ("gesdd", "gesvd"):
        try:
            U, s, Wt = sla.svd(M, full_matrices=False, check_finite=False,
                               lapack_driver=driver)
            break
        except (np.linalg.LinAlgError, ValueError):
            continue
    if U is None:
        raise LinalgError("SVD did not converge")
    W = Wt.T
    signs = _fix_vector_signs(U)
    return U * signs, s, W * signs


def symmetric_eig(M, rtol=1e-12):
    """Eigendecomposition ``M = Q diag(lam) Q^T`` of a symmetric matrix.

    Eigenvalues are ascending.
    """
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"matrix must be square, got {M.shape}")
    scale = np.max(np.abs(M)) if M.size else 0.0
    if np.max(np.abs(M - M.T), initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise LinalgError("matrix is not symmetric")
    try:
        lam, Q = sla.eigh(M, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinalgError(f"symmetric eigensolver failed: {exc}") from exc
    return Q * _fix_vector_signs(Q), lam

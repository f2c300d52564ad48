import numpy as np
import pytest

from suolson_dlra.linalg import (DimensionError, LinalgError, orthonormal_basis,
                                 qr_orthonormalize, svd, symmetric_eig)


def test_qr_identity():
    Q, R = qr_orthonormalize(np.eye(3))
    np.testing.assert_array_equal(Q, np.eye(3))
    np.testing.assert_array_equal(R, np.eye(3))


def test_qr_single_nonzero_column():
    Q, R = qr_orthonormalize([[2.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(Q[:, 0], [1.0, 0.0, 0.0])
    assert R[0, 0] == pytest.approx(2.0)
    # the null column is still completed to an orthonormal pair
    np.testing.assert_allclose(Q.T @ Q, np.eye(2), atol=1e-14)


def test_qr_random_reconstruction(rng):
    M = rng.normal(size=(50, 10))
    Q, R = qr_orthonormalize(M)
    assert np.abs(Q.T @ Q - np.eye(10)).max() < 1e-12
    assert np.abs(Q @ R - M).max() < 1e-12 * np.abs(M).max()
    assert np.all(np.diag(R) >= 0)
    assert np.allclose(np.triu(R), R)


def test_qr_rank_deficient_spans_input(rng):
    a = rng.normal(size=(20, 3))
    M = np.hstack([a, a @ rng.normal(size=(3, 4))])
    Q = orthonormal_basis(M)
    assert Q.shape == (20, 7)
    np.testing.assert_allclose(Q.T @ Q, np.eye(7), atol=1e-12)
    np.testing.assert_allclose(Q @ (Q.T @ M), M, atol=1e-12)


def test_qr_wide_input_spans_space(rng):
    Q, R = qr_orthonormalize(rng.normal(size=(4, 9)))
    assert Q.shape == (4, 4) and R.shape == (4, 9)


def test_qr_rejects_bad_input():
    with pytest.raises(DimensionError):
        qr_orthonormalize(np.ones(3))
    with pytest.raises(LinalgError):
        qr_orthonormalize([[np.nan, 1.0]])


def test_svd_diag():
    _, s, _ = svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(s, [3.0, 1.0])


def test_svd_zero():
    U, s, W = svd(np.zeros((4, 4)))
    np.testing.assert_array_equal(s, np.zeros(4))


def test_svd_rank_one(rng):
    x, y = rng.normal(size=7), rng.normal(size=5)
    _, s, _ = svd(np.outer(x, y))
    assert s[0] == pytest.approx(np.linalg.norm(x) * np.linalg.norm(y), rel=1e-13)
    assert np.all(s[1:] < 1e-12 * s[0])


def test_svd_contract(rng):
    M = rng.normal(size=(9, 6))
    U, s, W = svd(M)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    np.testing.assert_allclose(U.T @ U, np.eye(6), atol=1e-12)
    np.testing.assert_allclose(W.T @ W, np.eye(6), atol=1e-12)
    assert np.abs(U * s @ W.T - M).max() < 1e-12 * np.abs(M).max()
    # sign rule: largest-magnitude entry of each left vector is positive
    idx = np.argmax(np.abs(U), axis=0)
    assert np.all(U[idx, np.arange(6)] > 0)


def test_svd_deterministic(rng):
    M = rng.normal(size=(12, 5))
    a, b = svd(M), svd(M.copy())
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_svd_non_convergence_raises(monkeypatch):
    import scipy.linalg as sla

    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("no convergence")

    monkeypatch.setattr(sla, "svd", broken)
    with pytest.raises(LinalgError):
        svd(np.eye(3))


def test_eig_diag():
    _, lam = symmetric_eig(np.diag([-2.0, 5.0]))
    np.testing.assert_allclose(lam, [-2.0, 5.0])


def test_eig_two_by_two():
    _, lam = symmetric_eig([[0.0, 0.7], [0.7, 0.0]])
    np.testing.assert_allclose(lam, [-0.7, 0.7])


def test_eig_reconstruction(rng):
    M = rng.normal(size=(6, 6))
    M = M + M.T
    Q, lam = symmetric_eig(M)
    np.testing.assert_allclose(Q.T @ Q, np.eye(6), atol=1e-12)
    assert np.abs((Q * lam) @ Q.T - M).max() < 1e-12 * np.abs(M).max()


def test_eig_rejects_asymmetric():
    with pytest.raises(LinalgError):
        symmetric_eig([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(DimensionError):
        symmetric_eig(np.ones((2, 3)))

import numpy as np
import pytest
import scipy.sparse as sp

from linalg.dense import (
    Spectrum,
    as_dense,
    cond2,
    general_eig,
    lu,
    nullspace_orthobasis,
    power_norm,
    solve_linear,
    spd_sqrt,
    spd_sqrt_with_inverse,
    spectral_norm,
    sym_eig,
)
from utils.errors import NotPositiveDefiniteError, SingularMatrixError, UnisolvencyError


def _spd(n, rng):
    B = rng.standard_normal((n, n))
    return B @ B.T + n * np.eye(n)


def test_as_dense_accepts_sparse_and_rejects_nan():
    np.testing.assert_array_equal(as_dense(sp.eye(3, format="csr")), np.eye(3))
    with pytest.raises(ValueError):
        as_dense(np.array([[1.0, np.nan]]))


def test_sym_eig_reconstructs(rng):
    S = _spd(12, rng)
    Q, w = sym_eig(S)
    assert np.all(np.diff(w) >= 0)
    np.testing.assert_allclose((Q * w) @ Q.T, S, atol=1e-10)
    np.testing.assert_allclose(Q.T @ Q, np.eye(12), atol=1e-12)


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ValueError, match="not symmetric"):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_general_eig_rotation():
    spec = general_eig(np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert isinstance(spec, Spectrum) and len(spec) == 2
    np.testing.assert_allclose(spec.values, [-1j, 1j], atol=1e-15)


def test_general_eig_sorted_real_first(rng):
    D = np.diag([3.0, -1.0, 2.0, 0.5])
    V = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    spec = general_eig(V @ D @ np.linalg.inv(V), spot_checks=4)
    np.testing.assert_allclose(spec.real, [-1.0, 0.5, 2.0, 3.0], atol=1e-10)
    np.testing.assert_allclose(spec.imag, 0.0, atol=1e-10)


def test_nullspace_orthobasis(rng):
    P = rng.standard_normal((20, 4))
    W = nullspace_orthobasis(P)
    assert W.shape == (20, 16)
    np.testing.assert_allclose(P.T @ W, 0.0, atol=1e-12)
    np.testing.assert_allclose(W.T @ W, np.eye(16), atol=1e-12)


def test_nullspace_empty_block_is_identity():
    np.testing.assert_array_equal(nullspace_orthobasis(np.zeros((5, 0))), np.eye(5))


def test_nullspace_rank_deficient(rng):
    P = rng.standard_normal((10, 3))
    P[:, 2] = P[:, 0] + P[:, 1]
    with pytest.raises(UnisolvencyError):
        nullspace_orthobasis(P)


def test_spd_sqrt_and_inverse(rng):
    A = _spd(8, rng)
    S, S_inv = spd_sqrt_with_inverse(A)
    np.testing.assert_allclose(S @ S, A, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(S @ S_inv, np.eye(8), atol=1e-10)
    np.testing.assert_allclose(spd_sqrt(A), S)


def test_spd_sqrt_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError) as exc:
        spd_sqrt(np.diag([1.0, -2.0]))
    assert exc.value.eigenvalue == pytest.approx(-2.0)


def test_lu_rejects_singular():
    with pytest.raises(SingularMatrixError):
        lu(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_solve_linear(rng):
    A = _spd(6, rng)
    B = rng.standard_normal((6, 2))
    np.testing.assert_allclose(A @ solve_linear(A, B), B, atol=1e-10)


def test_power_norm_matches_svd(rng):
    A = rng.standard_normal((30, 12))
    est = power_norm(A)
    assert est.converged
    assert float(est) == pytest.approx(np.linalg.norm(A, 2), rel=1e-8)
    assert power_norm(np.zeros((3, 3))).value == 0.0


def test_cond2_diagonal():
    assert cond2(np.diag([1.0, 10.0])) == pytest.approx(10.0, rel=1e-9)
    assert spectral_norm(np.diag([1.0, -7.0])) == pytest.approx(7.0, rel=1e-9)

"""Dense linear algebra used by the differentiation-matrix constructions.

Every routine is backed by LAPACK through scipy.linalg and re-checks its own
reconstruction residual; loose residuals are logged, hard failures raise.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as sla

from utils.errors import (
    EigenSolverError,
    NotPositiveDefiniteError,
    SingularMatrixError,
    UnisolvencyError,
)

log = logging.getLogger("kdm.linalg")

SYM_TOL = 1e-10
RANK_TOL = 1e-10
SPD_TOL = 1e-13
POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
POWER_SEED = 20240229


def as_dense(A, name: str = "matrix") -> np.ndarray:
    """Float ndarray view of A (sparse inputs are densified); rejects NaN/Inf."""
    if hasattr(A, "toarray"):
        A = A.toarray()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def _require_square(A: np.ndarray, name: str):
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got {A.shape}")


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted by real part, then imaginary part."""

    values: np.ndarray

    @classmethod
    def from_values(cls, values: np.ndarray) -> "Spectrum":
        v = np.asarray(values, dtype=complex).ravel()
        order = np.lexsort((v.imag, v.real))
        out = v[order]
        out.setflags(write=False)
        return cls(out)

    def __len__(self) -> int:
        return self.values.size

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag


def sym_eig(S, check: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """S = Q diag(w) Q^T with ascending w."""
    S = as_dense(S, "symmetric matrix")
    _require_square(S, "symmetric matrix")
    if S.size == 0:
        return np.zeros((0, 0)), np.zeros(0)
    smax = float(np.abs(S).max())
    asym = float(np.abs(S - S.T).max())
    if asym > SYM_TOL * max(smax, np.finfo(float).tiny):
        raise ValueError(f"matrix is not symmetric (max |S - S^T| = {asym:.3e}, max |S| = {smax:.3e})")
    try:
        w, Q = sla.eigh(0.5 * (S + S.T))
    except sla.LinAlgError as e:
        raise EigenSolverError(f"symmetric eigensolver failed: {e}") from None
    if check:
        res = np.linalg.norm(S - (Q * w) @ Q.T) / max(np.linalg.norm(S), np.finfo(float).tiny)
        if res > 1e-9:
            log.warning("sym_eig reconstruction residual %.3e", res)
    return Q, w


def general_eig(M, spot_checks: int = 0) -> Spectrum:
    """All eigenvalues of a square matrix (LAPACK geev: balancing, Hessenberg, shifted QR)."""
    M = as_dense(M, "matrix")
    _require_square(M, "matrix")
    try:
        w = sla.eigvals(M, check_finite=False)
    except sla.LinAlgError as e:
        raise EigenSolverError(f"QR iteration did not converge: {e}") from None
    spec = Spectrum.from_values(w)
    if spot_checks and len(spec):
        norm = float(np.linalg.norm(M, 2)) if M.shape[0] <= 2000 else float(np.linalg.norm(M))
        idx = np.linspace(0, len(spec) - 1, min(spot_checks, len(spec))).astype(int)
        I = np.eye(M.shape[0])
        for i in idx:
            smin = float(sla.svdvals(M - spec.values[i] * I)[-1])
            if smin > 1e-8 * max(norm, 1.0):
                log.warning(
                    "eigenvalue %s: smallest singular value of M - mu I is %.3e", spec.values[i], smin
                )
    return spec


def nullspace_orthobasis(P) -> np.ndarray:
    """Orthonormal basis W of range(P)^perp from a pivoted full QR of P."""
    P = as_dense(P, "P")
    N, M = P.shape
    if M == 0:
        return np.eye(N)
    if N <= M:
        raise UnisolvencyError(f"need N > M for a nullspace, got N={N}, M={M}")
    Q, R, _ = sla.qr(P, mode="full", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.min() < RANK_TOL * diag.max():
        raise UnisolvencyError(
            f"P is rank deficient: smallest |R_ii| {diag.min():.3e} vs largest {diag.max():.3e}"
        )
    W = Q[:, M:]
    leak = float(np.abs(P.T @ W).max())
    if leak > 1e-12 * max(float(np.abs(P).max()), 1.0) * N:
        log.warning("nullspace basis leaks: max |P^T W| = %.3e", leak)
    return W


def spd_sqrt_with_inverse(A) -> Tuple[np.ndarray, np.ndarray]:
    """(A^(1/2), A^(-1/2)) through one symmetric eigendecomposition."""
    Q, w = sym_eig(A)
    if w.size == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    if w[0] <= SPD_TOL * max(abs(w[-1]), np.finfo(float).tiny):
        raise NotPositiveDefiniteError("matrix is not symmetric positive definite", float(w[0]))
    r = np.sqrt(w)
    S = (Q * r) @ Q.T
    S_inv = (Q / r) @ Q.T
    return 0.5 * (S + S.T), 0.5 * (S_inv + S_inv.T)


def spd_sqrt(A) -> np.ndarray:
    """Symmetric square root S with S S = A."""
    return spd_sqrt_with_inverse(A)[0]


def lu(A) -> Tuple[np.ndarray, np.ndarray]:
    """Partial-pivoting LU factors of a square matrix; near-zero pivots raise."""
    A = as_dense(A, "A")
    _require_square(A, "A")
    lu_piv = sla.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu_piv[0]))
    if pivots.size and pivots.min() <= np.finfo(float).eps * pivots.max():
        raise SingularMatrixError("matrix is singular to working precision", float(pivots.min()))
    return lu_piv


def solve_linear(A, B) -> np.ndarray:
    """X with A X = B; symmetric-indefinite saddle systems go through the same LU."""
    A = as_dense(A, "A")
    B = np.asarray(B, dtype=float)
    X = sla.lu_solve(lu(A), B, check_finite=False)
    res = np.linalg.norm(A @ X - B)
    scale = np.linalg.norm(A) * np.linalg.norm(X)
    if scale > 0 and res > 1e-8 * scale:
        log.warning("solve_linear residual %.3e exceeds 1e-8 * |A||X| = %.3e", res, 1e-8 * scale)
    return X


@dataclass(frozen=True)
class NormEstimate:
    value: float
    iterations: int
    converged: bool

    def __float__(self) -> float:
        return self.value


def power_norm(
    A, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER, seed: int = POWER_SEED
) -> NormEstimate:
    """Largest singular value by power iteration on the smaller Gram matrix."""
    A = as_dense(A, "A")
    if A.size == 0 or not np.any(A):
        return NormEstimate(0.0, 0, True)
    if A.shape[0] < A.shape[1]:
        A = A.T
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = A.T @ (A @ v)
        new = float(np.dot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return NormEstimate(0.0, it, True)
        v = w / nw
        if abs(new - lam) <= tol * new:
            return NormEstimate(float(np.sqrt(new)), it, True)
        lam = new
    log.warning("power iteration hit %d iterations for a %s matrix", max_iter, A.shape)
    return NormEstimate(float(np.sqrt(lam)), max_iter, False)


def spectral_norm(A) -> float:
    return power_norm(A).value


def cond2(V, V_inv: Optional[np.ndarray] = None) -> float:
    """||V|| ||V^-1|| in the induced 2-norm."""
    V = as_dense(V, "V")
    _require_square(V, "V")
    if V_inv is None:
        V_inv = solve_linear(V, np.eye(V.shape[0]))
    return spectral_norm(V) * spectral_norm(V_inv)

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as sla

from kernels.operators import SpectralOperator, apply_operator, check_compatibility
from kernels.profiles import ZonalKernel
from linalg.dense import lu, nullspace_orthobasis, solve_linear
from sphere.harmonics import HarmonicBasisEnumeration, vandermonde
from sphere.points import PointSet
from utils.errors import CoincidentPointsError, IncompatibleOperatorError

log = logging.getLogger("kdm.global_dm")

COINCIDENT_DOT = 1.0 - 1e-14
EXACTNESS_TOL = 1e-8
AUDIT_TOL = 1e-8


def pairwise_dots(X: PointSet) -> np.ndarray:
    """Exactly symmetric Gram matrix x_j . x_k clamped to [-1, 1], unit diagonal."""
    G = X.coords @ X.coords.T
    G = np.triu(G) + np.triu(G, 1).T
    np.clip(G, -1.0, 1.0, out=G)
    np.fill_diagonal(G, -np.inf)
    j = int(np.argmax(G.max(axis=1))) if len(G) > 1 else 0
    if len(G) > 1 and G[j].max() > COINCIDENT_DOT:
        k = int(np.argmax(G[j]))
        raise CoincidentPointsError(f"nodes {j} and {k} coincide (dot {G[j, k]!r})")
    np.fill_diagonal(G, 1.0)
    return G


@dataclass(frozen=True, eq=False)
class CollocationPair:
    """Phi_X = (g(x_j.x_k)) and K_X = (Psi(x_j.x_k)) for Psi = L g."""

    phi: np.ndarray
    k: np.ndarray
    kernel: ZonalKernel
    op: SpectralOperator
    X: PointSet


def _require_compatible(kernel: ZonalKernel, op: SpectralOperator, mtilde: int):
    compat = check_compatibility(kernel, op, mtilde)
    if not compat:
        raise IncompatibleOperatorError(compat.message)


def collocation_matrices(kernel: ZonalKernel, op: SpectralOperator, X: PointSet) -> CollocationPair:
    _require_compatible(kernel, op, kernel.cpd_order)
    psi = apply_operator(kernel, op)
    G = pairwise_dots(X)
    phi = np.asarray(kernel.profile(G), dtype=float).reshape(G.shape)
    k = np.asarray(psi(G), dtype=float).reshape(G.shape)
    return CollocationPair(phi=phi, k=k, kernel=kernel, op=op, X=X)


@dataclass(frozen=True, eq=False)
class GlobalDM:
    """M_X; in CPD mode also P, Lambda (as a vector) and the saddle blocks A, B."""

    m: np.ndarray
    mode: str
    mtilde: int
    pair: CollocationPair
    P: np.ndarray
    lam: np.ndarray
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return self.m.shape[0]

    @property
    def kernel(self) -> ZonalKernel:
        return self.pair.kernel

    @property
    def op(self) -> SpectralOperator:
        return self.pair.op

    @property
    def X(self) -> PointSet:
        return self.pair.X

    @property
    def enum(self) -> HarmonicBasisEnumeration:
        return HarmonicBasisEnumeration.for_order(self.mtilde)


def global_dm_pd(kernel: ZonalKernel, op: SpectralOperator, X: PointSet) -> GlobalDM:
    """M = K Phi^-1, solved as Phi M^T = K (both symmetric)."""
    if kernel.cpd_order != 0:
        raise ValueError(f"{kernel.label} is not positive definite; use global_dm_cpd")
    t0 = time.perf_counter()
    pair = collocation_matrices(kernel, op, X)
    M = solve_linear(pair.phi, pair.k).T
    res = np.linalg.norm(M @ pair.phi - pair.k) / max(np.linalg.norm(pair.k), np.finfo(float).tiny)
    if res > EXACTNESS_TOL:
        log.warning("PD DM reproduces kernel columns only to %.3e", res)
    log.info("global PD DM N=%d %s %s in %.2fs", X.N, kernel.label, op.label, time.perf_counter() - t0)
    return GlobalDM(m=M, mode="pd", mtilde=0, pair=pair, P=np.zeros((X.N, 0)), lam=np.zeros(0))


@dataclass(frozen=True, eq=False)
class SaddleSolution:
    A: np.ndarray
    B: np.ndarray


def saddle_closed_form(phi: np.ndarray, P: np.ndarray) -> SaddleSolution:
    """A = W (W^T Phi W)^-1 W^T, B = P^+ (I - Phi A)."""
    W = nullspace_orthobasis(P)
    A_hat = solve_linear(W.T @ phi @ W, np.eye(W.shape[1]))
    A = W @ A_hat @ W.T
    B = sla.pinv(P) @ (np.eye(phi.shape[0]) - phi @ A)
    return SaddleSolution(A=A, B=B)


def solve_saddle(phi: np.ndarray, P: np.ndarray, audit: bool = False) -> SaddleSolution:
    """Solve [[Phi, P], [P^T, 0]] [A; B] = [I; 0] with one pivoted factorization."""
    N, M = P.shape
    nullspace_orthobasis(P)  # rank check, raises UnisolvencyError
    bordered = np.zeros((N + M, N + M))
    bordered[:N, :N] = phi
    bordered[:N, N:] = P
    bordered[N:, :N] = P.T
    rhs = np.zeros((N + M, N))
    rhs[:N] = np.eye(N)
    sol = sla.lu_solve(lu(bordered), rhs, check_finite=False)
    A, B = sol[:N], sol[N:]
    res = np.linalg.norm(bordered @ sol - rhs)
    tol = 1e-9 * (np.linalg.norm(phi) + np.linalg.norm(P)) * max(np.linalg.norm(sol), 1.0)
    if res > tol:
        log.warning("saddle residual %.3e above %.3e", res, tol)
    if audit:
        closed = saddle_closed_form(phi, P)
        for name, got, ref in (("A", A, closed.A), ("B", B, closed.B)):
            rel = np.linalg.norm(got - ref) / max(np.linalg.norm(ref), np.finfo(float).tiny)
            log.info("saddle audit: %s bordered vs closed form rel diff %.3e", name, rel)
            if rel > AUDIT_TOL:
                log.warning("saddle audit: %s differs from the closed form by %.3e", name, rel)
    return SaddleSolution(A=A, B=B)


def _polynomial_block(X: PointSet, op: SpectralOperator, mtilde: int) -> Tuple[np.ndarray, np.ndarray]:
    enum = HarmonicBasisEnumeration.for_order(mtilde)
    return vandermonde(X, enum), op.eigenvalues(enum.degrees)


def global_dm_cpd(
    kernel: ZonalKernel,
    op: SpectralOperator,
    X: PointSet,
    mtilde: Optional[int] = None,
    audit: bool = False,
) -> GlobalDM:
    """M = K A + P Lambda B from the saddle-point solve."""
    mtilde = kernel.cpd_order if mtilde is None else mtilde
    _require_compatible(kernel, op, mtilde)
    if X.N <= mtilde * mtilde:
        raise ValueError(f"need N > M = {mtilde * mtilde}, got N={X.N}")
    t0 = time.perf_counter()
    pair = collocation_matrices(kernel, op, X)
    P, lam = _polynomial_block(X, op, mtilde)
    saddle = solve_saddle(pair.phi, P, audit=audit)
    M = pair.k @ saddle.A + (P * lam) @ saddle.B
    if P.shape[1]:
        target = P * lam
        col_res = np.linalg.norm(M @ P - target, axis=0)
        col_tol = EXACTNESS_TOL * np.linalg.norm(target, axis=0) + EXACTNESS_TOL
        if np.any(col_res > col_tol):
            j = int(np.argmax(col_res - col_tol))
            log.warning("CPD DM exactness on harmonic %d off by %.3e", j, col_res[j])
    log.info(
        "global CPD DM N=%d mtilde=%d %s %s in %.2fs",
        X.N, mtilde, kernel.label, op.label, time.perf_counter() - t0,
    )
    return GlobalDM(m=M, mode="cpd", mtilde=mtilde, pair=pair, P=P, lam=lam, A=saddle.A, B=saddle.B)


def build_global_dm(
    kernel: ZonalKernel,
    op: SpectralOperator,
    X: PointSet,
    mtilde: Optional[int] = None,
    audit: bool = False,
) -> GlobalDM:
    """Dispatch: mtilde = 0 (PD kernels only) goes through K Phi^-1."""
    mtilde = kernel.cpd_order if mtilde is None else mtilde
    if mtilde == 0:
        return global_dm_pd(kernel, op, X)
    return global_dm_cpd(kernel, op, X, mtilde, audit=audit)

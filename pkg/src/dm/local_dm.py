from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.linalg as sla
import scipy.sparse as sp
from tqdm import tqdm

from kernels.operators import SpectralOperator, apply_operator, check_compatibility
from kernels.profiles import ZonalKernel
from kernels.zonal import ZonalFunction
from linalg.dense import lu
from sphere.harmonics import HarmonicBasisEnumeration, harmonic_matrix
from sphere.points import PointSet, nearest_neighbors
from utils.errors import IncompatibleOperatorError, LocalUnisolvencyError, SingularMatrixError
from utils.io import write_text

log = logging.getLogger("kdm.local_dm")

DENSE_EXPORT_MAX = 8192
LOCAL_RANK_TOL = 1e-10
ORIENTATIONS = ("row", "column")


def stencil_size(K: float, N: int, mtilde: int = 0) -> int:
    """ceil(K^2 (ln N)^2 / 7) clamped to [mtilde^2 + 1, N]."""
    if not K > 0 or N < 2:
        raise ValueError(f"need K > 0 and N >= 2, got K={K}, N={N}")
    raw = math.ceil(K * K * math.log(N) ** 2 / 7.0)
    return int(min(max(raw, mtilde * mtilde + 1), N))


@dataclass(frozen=True, eq=False)
class StencilSet:
    K: float
    n: int
    stencils: np.ndarray  # (N, n) node indices, row j starts with j

    @property
    def N(self) -> int:
        return self.stencils.shape[0]

    def __getitem__(self, j: int) -> np.ndarray:
        return self.stencils[j]


def build_stencils(X: PointSet, K: float, mtilde: int) -> StencilSet:
    n = stencil_size(K, X.N, mtilde)
    st = np.empty((X.N, n), dtype=np.int64)
    for j in range(X.N):
        st[j] = nearest_neighbors(X, j, n)
    st.setflags(write=False)
    log.debug("stencils N=%d K=%g n=%d", X.N, K, n)
    return StencilSet(K=float(K), n=n, stencils=st)


@dataclass(frozen=True, eq=False)
class _LocalProblem:
    """Everything one stencil needs: local Phi, Psi, harmonics and the factored bordered matrix."""

    idx: np.ndarray
    psi: np.ndarray
    P: np.ndarray
    lam: np.ndarray
    factor: Tuple[np.ndarray, np.ndarray]


def _local_problem(
    center: int,
    idx: np.ndarray,
    X: PointSet,
    kernel: ZonalKernel,
    psi_fn: ZonalFunction,
    enum: HarmonicBasisEnumeration,
    lam: np.ndarray,
) -> _LocalProblem:
    c = X.coords[idx]
    G = c @ c.T
    G = np.triu(G) + np.triu(G, 1).T
    np.fill_diagonal(G, 1.0)
    phi = np.asarray(kernel.profile(G)).reshape(G.shape)
    psi = np.asarray(psi_fn(G)).reshape(G.shape)
    P = harmonic_matrix(c, enum)
    n, M = P.shape
    if M:
        sv = sla.svdvals(P)
        if sv[-1] < LOCAL_RANK_TOL * sv[0]:
            raise LocalUnisolvencyError(center, f"harmonic block has rank < {M} (sigma_min {sv[-1]:.3e})")
    bordered = np.zeros((n + M, n + M))
    bordered[:n, :n] = phi
    bordered[:n, n:] = P
    bordered[n:, :n] = P.T
    try:
        factor = lu(bordered)
    except SingularMatrixError as e:
        raise LocalUnisolvencyError(center, str(e)) from None
    return _LocalProblem(idx=idx, psi=psi, P=P, lam=lam, factor=factor)


def local_weights_row(prob: _LocalProblem) -> np.ndarray:
    """Weights w with (M u)_j = sum_i w_i u(x_i) over the stencil of x_j (the center, position 0)."""
    n = prob.idx.size
    rhs = np.concatenate([prob.psi[0], prob.lam * prob.P[0]])
    sol = sla.lu_solve(prob.factor, rhs, check_finite=False)
    return sol[:n]


def local_column_values(prob: _LocalProblem) -> np.ndarray:
    """L b_k at the stencil nodes, b_k the local Lagrange function of the center."""
    n = prob.idx.size
    rhs = np.zeros(n + prob.P.shape[1])
    rhs[0] = 1.0
    sol = sla.lu_solve(prob.factor, rhs, check_finite=False)
    a, b = sol[:n], sol[n:]
    return prob.psi @ a + prob.P @ (prob.lam * b)


def _prepare(kernel: ZonalKernel, op: SpectralOperator, mtilde: int):
    compat = check_compatibility(kernel, op, mtilde)
    if not compat:
        raise IncompatibleOperatorError(compat.message)
    enum = HarmonicBasisEnumeration.for_order(mtilde)
    return apply_operator(kernel, op), enum, op.eigenvalues(enum.degrees)


def local_lagrange_column(
    kernel: ZonalKernel,
    op: SpectralOperator,
    X: PointSet,
    stencils: StencilSet,
    k: int,
    mtilde: Optional[int] = None,
) -> sp.csc_matrix:
    """Column k of the local DM as an (N, 1) sparse column supported on the stencil of x_k."""
    mtilde = kernel.cpd_order if mtilde is None else mtilde
    psi_fn, enum, lam = _prepare(kernel, op, mtilde)
    prob = _local_problem(k, stencils[k], X, kernel, psi_fn, enum, lam)
    vals = local_column_values(prob)
    return sp.csc_matrix((vals, (prob.idx, np.zeros(prob.idx.size, dtype=np.int64))), shape=(X.N, 1))


@dataclass(frozen=True, eq=False)
class LocalDM:
    matrix: sp.csr_matrix
    stencils: StencilSet
    orientation: str
    mtilde: int

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.stencils.n

    def to_dense(self) -> np.ndarray:
        if self.N > DENSE_EXPORT_MAX:
            raise ValueError(f"dense export is limited to N <= {DENSE_EXPORT_MAX}, got {self.N}")
        return self.matrix.toarray()

    def nnz_per_row(self) -> np.ndarray:
        return np.diff(self.matrix.tocsr().indptr)

    def nnz_per_column(self) -> np.ndarray:
        return np.diff(self.matrix.tocsc().indptr)

    def triplets(self) -> pd.DataFrame:
        """(row, col, value), 0-based, sorted by (col, row)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.row, coo.col))
        return pd.DataFrame({"row": coo.row[order], "col": coo.col[order], "value": coo.data[order]})

    def write_triplets(self, path: Path, config: Optional[Dict[str, Any]] = None) -> Path:
        df = self.triplets()
        lines = [f"{r} {c} {v:.17g}" for r, c, v in zip(df["row"], df["col"], df["value"])]
        return write_text(Path(path), "\n".join(lines) + "\n", config)


def assemble_local_dm(
    kernel: ZonalKernel,
    op: SpectralOperator,
    X: PointSet,
    K: float,
    mtilde: Optional[int] = None,
    orientation: str = "row",
    progress: bool = False,
) -> LocalDM:
    """Local RBF-FD DM from nearest-neighbour stencils.

    orientation="row" solves one weight problem per evaluation node (polynomially
    exact rows); orientation="column" builds local Lagrange functions per node.
    """
    if orientation not in ORIENTATIONS:
        raise ValueError(f"orientation must be one of {ORIENTATIONS}, got {orientation!r}")
    mtilde = kernel.cpd_order if mtilde is None else mtilde
    psi_fn, enum, lam = _prepare(kernel, op, mtilde)
    t0 = time.perf_counter()
    stencils = build_stencils(X, K, mtilde)
    N, n = X.N, stencils.n
    rows = np.empty(N * n, dtype=np.int64)
    cols = np.empty(N * n, dtype=np.int64)
    vals = np.empty(N * n)
    it = tqdm(range(N), desc=f"local DM K={K:g}", disable=not progress, leave=False)
    for j in it:
        prob = _local_problem(j, stencils[j], X, kernel, psi_fn, enum, lam)
        sl = slice(j * n, (j + 1) * n)
        if orientation == "row":
            rows[sl] = j
            cols[sl] = prob.idx
            vals[sl] = local_weights_row(prob)
        else:
            rows[sl] = prob.idx
            cols[sl] = j
            vals[sl] = local_column_values(prob)
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    log.info(
        "local DM N=%d K=%g n=%d (%s) %s %s in %.2fs",
        N, K, n, orientation, kernel.label, op.label, time.perf_counter() - t0,
    )
    return LocalDM(matrix=matrix, stencils=stencils, orientation=orientation, mtilde=mtilde)

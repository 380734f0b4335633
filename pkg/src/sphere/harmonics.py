from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Tuple, Union

import numpy as np
from scipy.special import gammaln, lpmv

from utils.errors import UnisolvencyError

from .points import PointSet, SpherePoint

MAX_DEGREE = 30


def laplace_eigenvalue(degree: int, d: int = 2) -> float:
    """nu_l = -l(l+d-1)."""
    if degree < 0 or d < 1:
        raise ValueError(f"need degree >= 0 and d >= 1, got ({degree}, {d})")
    return -float(degree * (degree + d - 1))


def eigenspace_dim(degree: int, d: int = 2) -> int:
    """N_l = (2l+d-1) Gamma(l+d-1) / (Gamma(l+1) Gamma(d)), as integer binomials."""
    if degree < 0 or d < 1:
        raise ValueError(f"need degree >= 0 and d >= 1, got ({degree}, {d})")
    if degree == 0:
        return 1
    return math.comb(degree + d - 1, degree) + math.comb(degree + d - 2, degree - 1)


def poly_space_dim(max_degree: int, d: int = 2) -> int:
    return sum(eigenspace_dim(l, d) for l in range(max_degree + 1))


@dataclass(frozen=True)
class HarmonicIndex:
    """Degree l and order mu in 1..2l+1: mu=1 zonal, then (cos k, sin k) for k = 1..l."""

    degree: int
    order: int

    def __post_init__(self):
        if self.degree < 0 or not 1 <= self.order <= 2 * self.degree + 1:
            raise ValueError(f"invalid harmonic index (l={self.degree}, mu={self.order})")

    @property
    def k(self) -> int:
        return self.order // 2

    @property
    def kind(self) -> str:
        if self.order == 1:
            return "zonal"
        return "cos" if self.order % 2 == 0 else "sin"


@dataclass(frozen=True)
class HarmonicBasisEnumeration:
    """Degree-major enumeration j <-> (l, mu) of all harmonics with l <= max_degree."""

    max_degree: int

    def __post_init__(self):
        if self.max_degree < -1:
            raise ValueError(f"max_degree must be >= -1, got {self.max_degree}")
        if self.max_degree > MAX_DEGREE:
            raise ValueError(f"max_degree {self.max_degree} exceeds supported {MAX_DEGREE}")

    @classmethod
    def for_order(cls, mtilde: int) -> "HarmonicBasisEnumeration":
        """Basis of Pi_{mtilde-1}."""
        return cls(mtilde - 1)

    @cached_property
    def indices(self) -> Tuple[HarmonicIndex, ...]:
        return tuple(
            HarmonicIndex(l, mu)
            for l in range(self.max_degree + 1)
            for mu in range(1, 2 * l + 2)
        )

    @property
    def size(self) -> int:
        return (self.max_degree + 1) ** 2

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[HarmonicIndex]:
        return iter(self.indices)

    def __getitem__(self, j: int) -> HarmonicIndex:
        return self.indices[j]

    def position(self, idx: HarmonicIndex) -> int:
        if idx.degree > self.max_degree:
            raise KeyError(idx)
        return idx.degree**2 + idx.order - 1

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([i.degree for i in self.indices], dtype=int)


def legendre_table(max_degree: int, t: Union[float, np.ndarray]) -> np.ndarray:
    """P_0..P_max_degree at t via the three-term recurrence; shape (max_degree+1, *t.shape)."""
    t = np.asarray(t, dtype=float)
    out = np.empty((max_degree + 1,) + t.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = t
    for l in range(1, max_degree):
        out[l + 1] = ((2 * l + 1) * t * out[l] - l * out[l - 1]) / (l + 1)
    return out


def legendre(degree: int, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Legendre polynomial with P_l(1) = 1."""
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    val = legendre_table(degree, t)[degree]
    return float(val) if np.ndim(val) == 0 else val


def legendre_coefficients(
    f: Callable[[np.ndarray], np.ndarray], max_degree: int, nodes: int = 256
) -> np.ndarray:
    """a_l with f = sum a_l P_l, by Gauss-Legendre quadrature."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    table = legendre_table(max_degree, t)
    ell = np.arange(max_degree + 1)
    return (2 * ell + 1) / 2.0 * (table @ (w * f(t)))


def _xyz(x: Union[SpherePoint, np.ndarray]) -> np.ndarray:
    if isinstance(x, SpherePoint):
        return x.as_array()
    return np.asarray(x, dtype=float)


def _norm_const(degree: int, k: int) -> float:
    return math.sqrt(
        (2 * degree + 1) / (4 * math.pi) * math.exp(gammaln(degree - k + 1) - gammaln(degree + k + 1))
    )


def eval_harmonic(idx: HarmonicIndex, x: Union[SpherePoint, np.ndarray]) -> Union[float, np.ndarray]:
    """Real L2(S^2)-orthonormal spherical harmonic Y_l^mu at x (a point or an (..., 3) array)."""
    if idx.degree > MAX_DEGREE:
        raise ValueError(f"degree {idx.degree} exceeds supported {MAX_DEGREE}")
    c = _xyz(x)
    z = np.clip(c[..., 2], -1.0, 1.0)
    k = idx.k
    plm = lpmv(k, idx.degree, z) * _norm_const(idx.degree, k)
    if idx.kind == "zonal":
        val = plm
    else:
        phi = np.arctan2(c[..., 1], c[..., 0])
        trig = np.cos(k * phi) if idx.kind == "cos" else np.sin(k * phi)
        val = math.sqrt(2.0) * plm * trig
    return float(val) if np.ndim(val) == 0 else val


def harmonic_matrix(coords: np.ndarray, enum: HarmonicBasisEnumeration) -> np.ndarray:
    """Columns p_j evaluated at the rows of ``coords``; no rank requirement."""
    c = np.asarray(coords, dtype=float)
    out = np.empty((c.shape[0], enum.size))
    for j, idx in enumerate(enum):
        out[:, j] = eval_harmonic(idx, c)
    return out


def vandermonde(X: PointSet, enum: HarmonicBasisEnumeration) -> np.ndarray:
    """P[k, j] = p_j(x_k), shape (N, M). Full column rank is checked downstream."""
    if X.N < enum.size:
        raise UnisolvencyError(f"need N >= M for a full-rank Vandermonde, got N={X.N}, M={enum.size}")
    return harmonic_matrix(X.coords, enum)

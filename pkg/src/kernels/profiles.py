from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Optional, Union

import numpy as np
from numpy.polynomial import Polynomial

from sphere.harmonics import laplace_eigenvalue, legendre_table

from .zonal import ONE_MINUS_T, ZonalFunction

FOUR_PI = 4.0 * math.pi


class KernelKind(str, Enum):
    SURFACE_SPLINE = "ss"
    INVERSE_MULTIQUADRIC = "imq"


@dataclass(frozen=True)
class ZonalKernel:
    """Zonal kernel Phi(x, y) = scale * g(x.y).

    Surface splines carry the sign (-1)^m in g so that the kernel is CPD of order m
    with positive Mercer coefficients; ``scale`` is an extra factor used to check
    that differentiation matrices do not depend on it.
    """

    kind: KernelKind
    m: Optional[int] = None
    eps: Optional[float] = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind is KernelKind.SURFACE_SPLINE:
            if self.m is None or self.m < 2:
                raise ValueError(f"surface spline order must be >= 2, got {self.m}")
        elif self.eps is None or not self.eps > 0:
            raise ValueError(f"inverse multiquadric needs eps > 0, got {self.eps}")
        if self.scale == 0 or not math.isfinite(self.scale):
            raise ValueError(f"kernel scale must be finite and nonzero, got {self.scale}")

    @property
    def cpd_order(self) -> int:
        return int(self.m) if self.kind is KernelKind.SURFACE_SPLINE else 0

    @property
    def cpd_sign(self) -> float:
        """Sign that makes the scaled kernel CPD (rather than conditionally negative definite)."""
        return 1.0 if self.scale > 0 else -1.0

    @cached_property
    def profile(self) -> ZonalFunction:
        if self.kind is KernelKind.SURFACE_SPLINE:
            m = int(self.m)
            poly = ONE_MINUS_T ** (m - 1) * ((-1.0) ** m * self.scale)
            return ZonalFunction.log_term(poly)
        return ZonalFunction.imq_term(float(self.eps), 0, Polynomial([self.scale]))

    def __call__(self, t):
        return self.profile(t)

    def scaled(self, factor: float) -> "ZonalKernel":
        return replace(self, scale=self.scale * factor)

    @property
    def label(self) -> str:
        if self.kind is KernelKind.SURFACE_SPLINE:
            return f"ss:m={self.m}"
        return f"imq:eps={self.eps:g}"


def surface_spline(m: int) -> ZonalKernel:
    return ZonalKernel(KernelKind.SURFACE_SPLINE, m=int(m))


def inverse_multiquadric(eps: float) -> ZonalKernel:
    return ZonalKernel(KernelKind.INVERSE_MULTIQUADRIC, eps=float(eps))


_KERNEL_RE = re.compile(r"^\s*(ss|imq)\s*:\s*(m|eps)\s*=\s*([^\s]+)\s*$")


def parse_kernel(text: str) -> ZonalKernel:
    """'ss:m=3' or 'imq:eps=2.0'."""
    match = _KERNEL_RE.match(text)
    if not match:
        raise ValueError(f"unrecognised kernel spec {text!r}; expected 'ss:m=<int>' or 'imq:eps=<float>'")
    kind, key, value = match.groups()
    if kind == "ss" and key == "m":
        try:
            return surface_spline(int(value))
        except ValueError as e:
            raise ValueError(f"kernel spec {text!r}: {e}") from None
    if kind == "imq" and key == "eps":
        return inverse_multiquadric(float(value))
    raise ValueError(f"kernel spec {text!r}: {kind} takes {'m' if kind == 'ss' else 'eps'}")


def _imq_ratio(eps: float) -> float:
    e2 = eps * eps
    # r = (1 + e2 - sqrt(1 + 2 e2)) / e2, rationalised
    return e2 / (1.0 + e2 + math.sqrt(1.0 + 2.0 * e2))


def mercer_coeff(kernel: ZonalKernel, degree: int) -> float:
    """c_l with g(t) = sum_l c_l (2l+1)/(4 pi) P_l(t)."""
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    if kernel.kind is KernelKind.SURFACE_SPLINE:
        m = int(kernel.m)
        if degree < m:
            raise ValueError(f"surface spline coefficients start at degree m={m}, got {degree}")
        nu = laplace_eigenvalue(degree)
        prod = 1.0
        for j in range(m):
            prod *= nu + j * (j + 1)
        return kernel.scale / abs(prod)
    eps = float(kernel.eps)
    r = _imq_ratio(eps)
    return kernel.scale * FOUR_PI / (2 * degree + 1) * math.sqrt(2.0 * r) / eps * r**degree


def mercer_coeff_quadrature(kernel: ZonalKernel, degree: int, nodes: Optional[int] = None) -> float:
    """c_l = 2 pi int_{-1}^{1} g(t) P_l(t) dt by Gauss-Legendre (64 + 2l nodes by default)."""
    n = nodes or 64 + 2 * degree
    t, w = np.polynomial.legendre.leggauss(n)
    p = legendre_table(degree, t)[degree]
    return float(2.0 * math.pi * np.sum(w * kernel.profile(t) * p))


@dataclass(frozen=True)
class MercerCoefficients:
    kernel: ZonalKernel

    @property
    def start_degree(self) -> int:
        return self.kernel.cpd_order

    def __call__(self, degree: int) -> float:
        return mercer_coeff(self.kernel, degree)

    def table(self, max_degree: int) -> np.ndarray:
        """c_0..c_max_degree, zero below the start degree."""
        out = np.zeros(max(max_degree + 1, 0))
        for l in range(self.start_degree, max_degree + 1):
            out[l] = mercer_coeff(self.kernel, l)
        return out


def truncated_series_eval(
    coeffs: MercerCoefficients, t: Union[float, np.ndarray], max_degree: int
) -> Union[float, np.ndarray]:
    """sum_{start <= l <= max_degree} c_l (2l+1)/(4 pi) P_l(t)."""
    t = np.asarray(t, dtype=float)
    if max_degree < coeffs.start_degree:
        val = np.zeros(t.shape)
    else:
        ell = np.arange(max_degree + 1)
        weights = coeffs.table(max_degree) * (2 * ell + 1) / FOUR_PI
        val = np.tensordot(weights, legendre_table(max_degree, t), axes=1)
    return float(val) if np.ndim(val) == 0 else val

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from sphere.harmonics import laplace_eigenvalue
from utils.errors import IncompatibleOperatorError

from .profiles import KernelKind, ZonalKernel
from .zonal import ZonalFunction, apply_zonal_laplacian

log = logging.getLogger("kdm.operators")

SCAN_DEGREES = 64
ROOT_IMAG_TOL = 1e-9


@dataclass(frozen=True)
class SpectralOperator:
    """L = p(Delta) with p(x) = sum_i coeffs[i] x^i; lambda_l = p(nu_l)."""

    coeffs: Tuple[float, ...]

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise ValueError("operator polynomial needs at least one coefficient")
        if not all(math.isfinite(c) for c in self.coeffs):
            raise ValueError(f"operator coefficients must be finite, got {self.coeffs}")

    @property
    def degree(self) -> int:
        """L, the degree of p (0 for constants, including p = 0)."""
        nz = [i for i, c in enumerate(self.coeffs) if c != 0.0]
        return nz[-1] if nz else 0

    @cached_property
    def poly(self) -> Polynomial:
        return Polynomial(list(self.coeffs[: self.degree + 1]))

    def __call__(self, x: float) -> float:
        # Horner in plain floats
        acc = 0.0
        for c in reversed(self.coeffs[: self.degree + 1]):
            acc = acc * x + c
        return acc

    def eigenvalue(self, degree: int) -> float:
        return self(laplace_eigenvalue(degree))

    def eigenvalues(self, degrees: Iterable[int]) -> np.ndarray:
        return np.array([self.eigenvalue(int(l)) for l in degrees], dtype=float)

    def monotone_from(self, start: int = 0) -> int:
        """First degree beyond which l -> lambda_l is monotone.

        From there on nu_l lies below every real critical point of p.
        """
        cap = start + SCAN_DEGREES
        if self.degree < 2:
            return cap
        roots = self.poly.deriv().roots()
        real = [
            float(r.real) for r in np.atleast_1d(roots) if abs(r.imag) <= ROOT_IMAG_TOL * max(1.0, abs(r))
        ]
        if not real:
            return cap
        x_min = min(real)
        l = 0
        while -l * (l + 1) >= x_min:
            l += 1
        return max(cap, l)

    @property
    def tail_sign(self) -> int:
        """Sign of lambda_l as l -> infinity (0 for constant p)."""
        L = self.degree
        if L == 0:
            return 0
        return int(np.sign(self.coeffs[L] * (-1.0) ** L))

    @property
    def sign_profile(self) -> str:
        """'nonnegative', 'nonpositive' or 'indefinite' over all lambda_l."""
        vals = self.eigenvalues(range(self.monotone_from() + 1))
        tail = self.tail_sign
        nonneg = vals.min() >= 0 and tail >= 0
        nonpos = vals.max() <= 0 and tail <= 0
        if nonneg:
            return "nonnegative"
        if nonpos:
            return "nonpositive"
        return "indefinite"

    @property
    def label(self) -> str:
        return "p=" + ",".join(f"{c:g}" for c in self.coeffs)


def operator_from_poly(coeffs: Sequence[float]) -> SpectralOperator:
    return SpectralOperator(tuple(float(c) for c in coeffs))


def parse_operator(text: str) -> SpectralOperator:
    """'p=0,-1' is p(x) = -x, i.e. L = -Delta."""
    body = text.strip()
    if body.startswith("p="):
        body = body[2:]
    try:
        coeffs = [float(c) for c in body.split(",") if c.strip()]
    except ValueError:
        raise ValueError(f"unrecognised operator spec {text!r}; expected 'p=a0,a1,...'") from None
    return operator_from_poly(coeffs)


@dataclass(frozen=True)
class Compatibility:
    accepted: bool
    message: str

    def __bool__(self) -> bool:
        return self.accepted


def check_compatibility(kernel: ZonalKernel, op: SpectralOperator, mtilde: int) -> Compatibility:
    if mtilde < kernel.cpd_order:
        return Compatibility(
            False, f"mtilde={mtilde} < minimal CPD order {kernel.cpd_order} of {kernel.label}"
        )
    L = op.degree
    if kernel.kind is KernelKind.SURFACE_SPLINE:
        m = int(kernel.m)
        ok = L < m - 1
        rel = "<" if ok else "not <"
        return Compatibility(ok, f"L < m - d/2: L={L} {rel} m - 1={m - 1} for {kernel.label}")
    return Compatibility(True, f"{kernel.label}: exponentially decaying coefficients accept any L={L}")


def apply_operator(kernel: ZonalKernel, op: SpectralOperator) -> ZonalFunction:
    """Psi = p(Delta) g, accumulated over repeated zonal Laplacians."""
    compat = check_compatibility(kernel, op, kernel.cpd_order)
    if not compat:
        raise IncompatibleOperatorError(compat.message)
    term = kernel.profile
    psi = term * op.coeffs[0]
    for i in range(1, op.degree + 1):
        term = apply_zonal_laplacian(term)
        if op.coeffs[i] != 0.0:
            psi = psi + term * op.coeffs[i]
    log.debug("applied %s to %s", op.label, kernel.label)
    return psi

"""Closed-form algebra of zonal functions g(t), t = x.y on S^2.

A ZonalFunction is a sum of three kinds of terms:

    poly(t)
    log_poly(t) * log(1 - t)
    imq[k](t) * (1 + eps^2 (1 - t))^(-1/2 - k),   k = 0, 1, ...

The set is closed under d/dt as long as every log-carrying polynomial is divisible
by (1 - t), which is what the surface-spline profiles and their Laplacians satisfy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial

from utils.errors import ZonalAlgebraError

T = Polynomial([0.0, 1.0])
ONE_MINUS_T = Polynomial([1.0, -1.0])
ONE_MINUS_T2 = Polynomial([1.0, 0.0, -1.0])
DIVISION_TOL = 1e-12

ArrayLike = Union[float, np.ndarray]


def _zero() -> Polynomial:
    return Polynomial([0.0])


def _is_zero(p: Polynomial) -> bool:
    return not np.any(p.coef)


def _scale(p: Polynomial) -> float:
    return float(np.abs(p.coef).sum())


def divide_one_minus_t(p: Polynomial, what: str = "log term") -> Polynomial:
    """Exact quotient p / (1 - t); the remainder p(1) must vanish."""
    rem = float(p(1.0))
    if abs(rem) > DIVISION_TOL * max(_scale(p), np.finfo(float).tiny):
        raise ZonalAlgebraError(
            f"{what}: {p.coef.tolist()} is not divisible by (1 - t) (remainder {rem:.3e})"
        )
    q, _ = divmod(p, ONE_MINUS_T)
    return q


def _pad(polys: Sequence[Polynomial], n: int) -> List[Polynomial]:
    return list(polys) + [_zero() for _ in range(n - len(polys))]


@dataclass(frozen=True, eq=False)
class ZonalFunction:
    poly: Polynomial = field(default_factory=_zero)
    log_poly: Polynomial = field(default_factory=_zero)
    eps: Optional[float] = None
    imq: Tuple[Polynomial, ...] = ()

    def __post_init__(self):
        if self.imq and (self.eps is None or self.eps <= 0):
            raise ZonalAlgebraError(f"inverse-multiquadric terms need eps > 0, got {self.eps}")

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> "ZonalFunction":
        return cls(poly=Polynomial(list(coeffs)))

    @classmethod
    def log_term(cls, poly: Polynomial) -> "ZonalFunction":
        return cls(log_poly=poly)

    @classmethod
    def imq_term(cls, eps: float, k: int = 0, poly: Optional[Polynomial] = None) -> "ZonalFunction":
        terms = [_zero() for _ in range(k)] + [poly if poly is not None else Polynomial([1.0])]
        return cls(eps=eps, imq=tuple(terms))

    @property
    def has_log(self) -> bool:
        return not _is_zero(self.log_poly)

    @property
    def has_imq(self) -> bool:
        return any(not _is_zero(p) for p in self.imq)

    def _merged_eps(self, other: "ZonalFunction") -> Optional[float]:
        if self.has_imq and other.has_imq and self.eps != other.eps:
            raise ZonalAlgebraError(f"cannot add terms with eps={self.eps} and eps={other.eps}")
        return self.eps if self.has_imq else other.eps

    def __add__(self, other: "ZonalFunction") -> "ZonalFunction":
        if not isinstance(other, ZonalFunction):
            return NotImplemented
        n = max(len(self.imq), len(other.imq))
        imq = tuple(a + b for a, b in zip(_pad(self.imq, n), _pad(other.imq, n)))
        return ZonalFunction(
            poly=self.poly + other.poly,
            log_poly=self.log_poly + other.log_poly,
            eps=self._merged_eps(other),
            imq=imq,
        )

    def __mul__(self, c: float) -> "ZonalFunction":
        return ZonalFunction(
            poly=self.poly * c,
            log_poly=self.log_poly * c,
            eps=self.eps,
            imq=tuple(p * c for p in self.imq),
        )

    __rmul__ = __mul__

    def __neg__(self) -> "ZonalFunction":
        return self * -1.0

    def __sub__(self, other: "ZonalFunction") -> "ZonalFunction":
        return self + (-other)

    def times_poly(self, p: Polynomial) -> "ZonalFunction":
        return ZonalFunction(
            poly=self.poly * p,
            log_poly=self.log_poly * p,
            eps=self.eps,
            imq=tuple(q * p for q in self.imq),
        )

    def derivative(self) -> "ZonalFunction":
        poly = self.poly.deriv()
        if self.has_log:
            # (q (1-t) log(1-t))' = ((1-t) q)' log(1-t) - q
            poly = poly - divide_one_minus_t(self.log_poly, "derivative of log term")
        imq = _pad([], len(self.imq) + 1) if self.imq else []
        if self.imq:
            e2 = float(self.eps) ** 2
            for k, p in enumerate(self.imq):
                imq[k] = imq[k] + p.deriv()
                imq[k + 1] = imq[k + 1] + p * ((0.5 + k) * e2)
        return ZonalFunction(poly=poly, log_poly=self.log_poly.deriv(), eps=self.eps, imq=tuple(imq))

    def __call__(self, t: ArrayLike) -> ArrayLike:
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        val = self.poly(t)
        if self.has_log:
            s = 1.0 - t
            inside = s > 0.0
            if not np.all(inside) and abs(float(self.log_poly(1.0))) > DIVISION_TOL * _scale(self.log_poly):
                raise ZonalAlgebraError("log term has no finite limit at t = 1")
            lg = np.log(np.where(inside, s, 1.0))
            val = val + np.where(inside, self.log_poly(t) * lg, 0.0)
        if self.imq:
            base = 1.0 + float(self.eps) ** 2 * (1.0 - t)
            for k, p in enumerate(self.imq):
                if not _is_zero(p):
                    val = val + p(t) * base ** (-0.5 - k)
        return float(val) if np.ndim(val) == 0 else val


def _laplacian_poly(p: Polynomial) -> Polynomial:
    return ONE_MINUS_T2 * p.deriv(2) - 2.0 * T * p.deriv()


def apply_zonal_laplacian(f: ZonalFunction, d: int = 2) -> ZonalFunction:
    """Laplace-Beltrami of a zonal function: (1 - t^2) f'' - 2 t f'."""
    if d != 2:
        raise ValueError(f"only the S^2 zonal Laplacian is implemented, got d={d}")
    out = ZonalFunction(poly=_laplacian_poly(f.poly))
    if f.has_log:
        p = f.log_poly
        q = divide_one_minus_t(p, "Laplacian of log term")
        extra = -(1.0 + T) * p.deriv() - ONE_MINUS_T2 * q.deriv() + 2.0 * T * q
        out = out + ZonalFunction(poly=extra, log_poly=_laplacian_poly(p))
    if f.imq:
        g = ZonalFunction(eps=f.eps, imq=f.imq)
        g1 = g.derivative()
        g2 = g1.derivative()
        out = out + g2.times_poly(ONE_MINUS_T2) - g1.times_poly(2.0 * T)
    return out

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from dm.block_decomp import (
    bauer_fike_cpd,
    bauer_fike_diag,
    decompose,
    sylvester_diagonalize,
)
from dm.global_dm import GlobalDM, build_global_dm
from dm.local_dm import assemble_local_dm
from kernels.operators import SpectralOperator
from kernels.profiles import KernelKind, ZonalKernel
from linalg.dense import Spectrum, as_dense, general_eig, spectral_norm
from sphere.harmonics import eigenspace_dim
from sphere.points import Family, PointSet, generate_pointset, separation_radius
from utils.io import write_csv

log = logging.getLogger("kdm.spectra")

TARGET_FLOOR = 1e-12
CHUNK = 1024


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    spectrum: Spectrum
    spectral_radius: float
    max_abs_imag: float
    min_real: float

    @classmethod
    def from_spectrum(cls, spectrum: Spectrum) -> "SpectrumReport":
        v = spectrum.values
        if v.size == 0:
            return cls(spectrum, 0.0, 0.0, math.nan)
        return cls(
            spectrum=spectrum,
            spectral_radius=float(np.abs(v).max()),
            max_abs_imag=float(np.abs(v.imag).max()),
            min_real=float(v.real.min()),
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"re": self.spectrum.real, "im": self.spectrum.imag})

    def write(self, path: Path, config: Optional[Dict[str, Any]] = None) -> Path:
        return write_csv(self.to_frame(), path, config)

    def summary(self) -> Dict[str, float]:
        return {
            "N": len(self.spectrum),
            "spectral_radius": self.spectral_radius,
            "max_abs_imag": self.max_abs_imag,
            "min_real": self.min_real,
        }


def spectrum_report(M) -> SpectrumReport:
    return SpectrumReport.from_spectrum(general_eig(as_dense(M, "M")))


def max_min_distance(a: np.ndarray, b: np.ndarray, relative: bool = False) -> float:
    """max over a of min over b of |a - b| (divided by |b| when relative)."""
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.size == 0:
        return 0.0
    if b.size == 0:
        raise ValueError("no targets to match against")
    denom = np.abs(b) if relative else np.ones(b.size)
    best = 0.0
    for start in range(0, a.size, CHUNK):
        d = np.abs(a[start : start + CHUNK, None] - b[None, :]) / denom[None, :]
        best = max(best, float(d.min(axis=1).max()))
    return best


def _nearest_argmin(a: np.ndarray, b: np.ndarray, denom: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    idx = np.empty(a.size, dtype=np.int64)
    dist = np.empty(a.size)
    for start in range(0, a.size, CHUNK):
        d = np.abs(a[start : start + CHUNK, None] - b[None, :]) / denom[None, :]
        k = d.argmin(axis=1)
        idx[start : start + CHUNK] = k
        dist[start : start + CHUNK] = d[np.arange(k.size), k]
    return idx, dist


@dataclass(frozen=True, eq=False)
class DistanceReport:
    value: float
    value_abs: float
    excluded: List[Tuple[np.ndarray, np.ndarray]]
    matching: np.ndarray
    retained_local: np.ndarray
    retained_global: np.ndarray


def _remove_nearest(values: np.ndarray, target: float, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """Greedy nearest-first removal of ``count`` values around ``target``."""
    if count > values.size:
        raise ValueError(f"cannot remove {count} eigenvalues from a spectrum of size {values.size}")
    order = np.argsort(np.abs(values - target), kind="stable")
    keep = np.ones(values.size, dtype=bool)
    keep[order[:count]] = False
    return values[keep], values[~keep]


def filtered_spectra_distance(
    local: SpectrumReport,
    global_: SpectrumReport,
    op: SpectralOperator,
    mtilde: int,
    multiplicity: str = "eigenspace",
) -> DistanceReport:
    """Max-min relative distance from the local spectrum into the global one, after
    dropping the exact eigenvalues lambda_l (l < mtilde) from both."""
    if multiplicity not in ("eigenspace", "single"):
        raise ValueError(f"multiplicity must be 'eigenspace' or 'single', got {multiplicity!r}")
    loc = np.asarray(local.spectrum.values, dtype=complex)
    glo = np.asarray(global_.spectrum.values, dtype=complex)
    excluded: List[Tuple[np.ndarray, np.ndarray]] = []
    for l in range(mtilde):
        target = op.eigenvalue(l)
        count = eigenspace_dim(l) if multiplicity == "eigenspace" else 1
        loc, lr = _remove_nearest(loc, target, count)
        glo, gr = _remove_nearest(glo, target, count)
        excluded.append((lr, gr))
    floor = TARGET_FLOOR * global_.spectral_radius
    targets = glo[np.abs(glo) >= floor]
    if targets.size == 0:
        raise ValueError("every retained global eigenvalue is below the relative-distance floor")
    matching, rel = _nearest_argmin(loc, targets, np.abs(targets))
    value = float(rel.max()) if rel.size else 0.0
    value_abs = max_min_distance(loc, glo) if glo.size else 0.0
    return DistanceReport(
        value=value,
        value_abs=value_abs,
        excluded=excluded,
        matching=matching,
        retained_local=loc,
        retained_global=targets,
    )


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float


def fit_rate(xs: Sequence[float], ys: Sequence[float], model: str = "algebraic") -> RateFit:
    """Least-squares line through (log x, log y) or (x, log y); non-finite pairs are dropped."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size == y.size:
        finite = np.isfinite(x) & np.isfinite(y)
        if not finite.all():
            log.warning("fit_rate: dropping %d non-finite pairs", int((~finite).sum()))
            x, y = x[finite], y[finite]
    if x.size != y.size or x.size < 3:
        raise ValueError(f"need at least 3 paired points, got {x.size} and {y.size}")
    if np.any(y <= 0):
        raise ValueError("fit_rate needs positive ys")
    if model == "algebraic":
        if np.any(x <= 0):
            raise ValueError("algebraic fit needs positive xs")
        u = np.log(x)
    elif model == "exponential":
        u = x
    else:
        raise ValueError(f"model must be 'algebraic' or 'exponential', got {model!r}")
    v = np.log(y)
    slope, intercept = np.polyfit(u, v, 1)
    rms = float(np.sqrt(np.mean((v - (slope * u + intercept)) ** 2)))
    return RateFit(float(slope), float(intercept), rms)


def _kernel_columns(kernel: ZonalKernel) -> Dict[str, Any]:
    return {
        "kernel": kernel.label,
        "m": kernel.m if kernel.kind is KernelKind.SURFACE_SPLINE else None,
    }


def r_norm_table(
    kernel: ZonalKernel,
    op: SpectralOperator,
    mtilde: int,
    family: Family,
    N_list: Iterable[int],
    iterations: int = 200,
    progress: bool = False,
) -> pd.DataFrame:
    """(N, q, |R|) per point-set size; a failed size is kept as a NaN row."""
    rows = []
    fam = Family(family)
    for N in tqdm(list(N_list), desc="rnorm", disable=not progress, leave=False):
        row: Dict[str, Any] = {"family": fam.value, **_kernel_columns(kernel), "mtilde": mtilde, "N": int(N)}
        try:
            t0 = time.perf_counter()
            X = generate_pointset(fam, int(N), iterations)
            q = separation_radius(X)
            bd = decompose(build_global_dm(kernel, op, X, mtilde), strict=False)
            row.update(q=q, normR=bd.norm_R)
            log.info("rnorm N=%d q=%.4e |R|=%.4e (%.1fs)", N, q, row["normR"], time.perf_counter() - t0)
        except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as e:
            log.warning("rnorm N=%d failed: %s", N, e)
            row.update(q=math.nan, normR=math.nan)
        rows.append(row)
    return pd.DataFrame(rows, columns=["family", "kernel", "m", "mtilde", "N", "q", "normR"])


def local_distance_table(
    kernel: ZonalKernel,
    op: SpectralOperator,
    mtilde: int,
    X: PointSet,
    K_list: Iterable[float],
    orientation: str = "row",
    multiplicity: str = "eigenspace",
    dm: Optional[GlobalDM] = None,
    progress: bool = False,
) -> pd.DataFrame:
    """Filtered spectral distance of local DMs to the global one across stencil parameters,
    next to the two perturbation bounds evaluated at |M - M_local|."""
    dm = dm or build_global_dm(kernel, op, X, mtilde)
    glob = spectrum_report(dm.m)
    bd = decompose(dm, strict=False)
    sylv = sylvester_diagonalize(bd)
    rows = []
    for K in tqdm(list(K_list), desc="localdist", disable=not progress, leave=False):
        ldm = assemble_local_dm(kernel, op, X, K, mtilde, orientation=orientation)
        dense = ldm.to_dense()
        loc = spectrum_report(dense)
        dist = filtered_spectra_distance(loc, glob, op, mtilde, multiplicity)
        diff = spectral_norm(dm.m - dense)
        try:
            diag_bound = bauer_fike_diag(bd, sylv, diff).bound
        except ValueError:
            diag_bound = math.nan
        rows.append(
            {
                "family": X.family.value,
                **_kernel_columns(kernel),
                "mtilde": mtilde,
                "N": X.N,
                "K": float(K),
                "n": ldm.n,
                "dist_rel": dist.value,
                "dist_abs": max_min_distance(loc.spectrum.values, glob.spectrum.values),
                "bound_prop42": bauer_fike_cpd(bd, diff),
                "bound_thm44": diag_bound,
            }
        )
        log.info("localdist K=%g n=%d dist_rel=%.3e |M - M_loc|=%.3e", K, ldm.n, dist.value, diff)
    return pd.DataFrame(rows)

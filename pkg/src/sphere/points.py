from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from utils.errors import PointSetFormatError, PointSetValidationError
from utils.io import write_text

log = logging.getLogger("kdm.points")

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0
UNIT_TOL = 1e-12
FILE_UNIT_TOL = 1e-6
DISTINCT_TOL = 1e-10
PROBE_MIN = 100_000


class Family(str, Enum):
    FIBONACCI = "fibonacci"
    HAMMERSLEY = "hammersley"
    MIN_ENERGY = "min_energy"
    FILE = "file"


@dataclass(frozen=True)
class SpherePoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        r2 = self.x * self.x + self.y * self.y + self.z * self.z
        if abs(r2 - 1.0) > UNIT_TOL:
            raise PointSetValidationError(
                f"point ({self.x}, {self.y}, {self.z}) is not unit norm (|x|^2={r2!r})"
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class MeshMetrics:
    h: float
    q: float
    rho: float


PointLike = Union[SpherePoint, np.ndarray, tuple, list]


def _as_xyz(p: PointLike) -> np.ndarray:
    if isinstance(p, SpherePoint):
        return p.as_array()
    return np.asarray(p, dtype=float)


def geodesic_distance(a: PointLike, b: PointLike) -> float:
    """arccos of the clamped dot product, in [0, pi]."""
    dot = float(np.dot(_as_xyz(a), _as_xyz(b)))
    return math.acos(min(1.0, max(-1.0, dot)))


def geodesic_from(coords: np.ndarray, center: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(coords @ center, -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class PointSet:
    """Ordered nodes on S^2; row j of ``coords`` is x_j in every downstream matrix."""

    coords: np.ndarray
    family: Family = Family.FILE
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        c = np.ascontiguousarray(self.coords, dtype=float)
        if c.ndim != 2 or c.shape[1] != 3:
            raise PointSetValidationError(f"coords must have shape (N, 3), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        if not self.check:
            return
        dev = np.abs(np.einsum("ij,ij->i", c, c) - 1.0)
        if dev.size and dev.max() > UNIT_TOL:
            j = int(dev.argmax())
            raise PointSetValidationError(f"point {j} is not unit norm (deviation {dev[j]:.2e})")
        if len(c) >= 2:
            d, _ = self.tree.query(c, k=2)
            j = int(np.argmin(d[:, 1]))
            if d[j, 1] <= DISTINCT_TOL:
                raise PointSetValidationError(f"point {j} duplicates another node")

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __getitem__(self, j: int) -> SpherePoint:
        x, y, z = self.coords[j]
        return SpherePoint(float(x), float(y), float(z))

    def __iter__(self) -> Iterator[SpherePoint]:
        return (self[j] for j in range(len(self)))

    @property
    def N(self) -> int:
        return len(self)

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.coords)

    @cached_property
    def metrics(self) -> MeshMetrics:
        return mesh_metrics(self)

    def rotated(self, rotation: np.ndarray) -> "PointSet":
        return PointSet(self.coords @ np.asarray(rotation).T, family=self.family)

    def write(self, path: Union[str, Path], config: Optional[Dict[str, Any]] = None) -> Path:
        """Three whitespace-separated columns, readable by load_pointset."""
        buf = io.StringIO()
        np.savetxt(buf, self.coords, fmt="%.17g", header=f"{self.family.value} N={self.N}", comments="# ")
        return write_text(Path(path), buf.getvalue(), config)


def _spherical_to_xyz(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    cl = np.cos(lat)
    return np.column_stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)])


def _fibonacci_coords(N: int) -> np.ndarray:
    half = (N - 1) // 2
    i = np.arange(-half, half + 1, dtype=float)
    lat = np.arcsin(2.0 * i / N)
    lon = np.mod(2.0 * np.pi * i / GOLDEN_RATIO, 2.0 * np.pi)
    return _spherical_to_xyz(lat, lon)


def generate_fibonacci(N: int) -> PointSet:
    """Symmetric spherical Fibonacci lattice, i = -(N-1)/2 .. (N-1)/2 (odd N only)."""
    if N < 3 or N % 2 == 0:
        raise ValueError(f"Fibonacci point sets need an odd N >= 3, got {N}")
    return PointSet(_fibonacci_coords(N), family=Family.FIBONACCI)


def van_der_corput(i: np.ndarray, base: int = 2) -> np.ndarray:
    i = np.asarray(i, dtype=np.int64).copy()
    out = np.zeros(i.shape, dtype=float)
    denom = 1.0
    while np.any(i > 0):
        denom *= base
        out += (i % base) / denom
        i //= base
    return out


def generate_hammersley(N: int) -> PointSet:
    if N < 2:
        raise ValueError(f"Hammersley point sets need N >= 2, got {N}")
    i = np.arange(N)
    z = 1.0 - 2.0 * (i + 0.5) / N
    lon = 2.0 * np.pi * van_der_corput(i)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return PointSet(
        np.column_stack([r * np.cos(lon), r * np.sin(lon), z]), family=Family.HAMMERSLEY
    )


def riesz_energy(coords: np.ndarray, s: float = 2.0) -> float:
    """Sum over ordered pairs j != k of |x_j - x_k|^(-s)."""
    g = coords @ coords.T
    d2 = np.clip(2.0 - 2.0 * g, 0.0, None)
    np.fill_diagonal(d2, np.inf)
    return float(np.sum(d2 ** (-s / 2.0)))


def _riesz_gradient(coords: np.ndarray) -> np.ndarray:
    # s = 2: grad_j = -4 sum_k (x_j - x_k) / |x_j - x_k|^4
    diff = coords[:, None, :] - coords[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    w = d2 ** -2
    return -4.0 * np.einsum("ij,ijk->ik", w, diff)


def _normalize_rows(c: np.ndarray) -> np.ndarray:
    return c / np.linalg.norm(c, axis=1, keepdims=True)


def generate_min_energy(N: int, iterations: int = 200) -> PointSet:
    """Projected gradient descent on the Riesz s=2 energy with backtracking."""
    if N < 4:
        raise ValueError(f"minimum-energy point sets need N >= 4, got {N}")
    init = generate_fibonacci(N) if N % 2 == 1 else generate_hammersley(N)
    x = init.coords.copy()
    energy = riesz_energy(x)
    e0 = energy
    step: Optional[float] = None
    accepted = 0
    for _ in range(iterations):
        g = _riesz_gradient(x)
        g -= np.einsum("ij,ij->i", g, x)[:, None] * x
        gmax = float(np.max(np.linalg.norm(g, axis=1)))
        if gmax == 0.0:
            break
        if step is None:
            # first move at most a tenth of the initial nearest-neighbour spacing
            d, _ = cKDTree(x).query(x, k=2)
            step = 0.1 * float(d[:, 1].min()) / gmax
        while step * gmax > 1e-15:
            trial = _normalize_rows(x - step * g)
            e_trial = riesz_energy(trial)
            if e_trial < energy:
                x, energy = trial, e_trial
                accepted += 1
                step *= 2.0
                break
            step *= 0.5
        else:
            break
    log.debug("min-energy N=%d: %d accepted steps, energy %.6g -> %.6g", N, accepted, e0, energy)
    return PointSet(x, family=Family.MIN_ENERGY)


def generate_pointset(family: Union[Family, str], N: int, iterations: int = 200) -> PointSet:
    fam = Family(family)
    if fam is Family.FIBONACCI:
        return generate_fibonacci(N)
    if fam is Family.HAMMERSLEY:
        return generate_hammersley(N)
    if fam is Family.MIN_ENERGY:
        return generate_min_energy(N, iterations)
    raise ValueError("file point sets are loaded with load_pointset, not generated")


def load_pointset(path: Union[str, Path]) -> PointSet:
    """Read whitespace-separated Cartesian rows; '#' lines are comments."""
    path = Path(path)
    rows: List[List[float]] = []
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise PointSetFormatError(str(path), 0, f"not UTF-8 text: {e.reason}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise PointSetFormatError(str(path), lineno, f"expected 3 numbers, got {len(parts)}")
        try:
            xyz = [float(p) for p in parts]
        except ValueError as e:
            raise PointSetFormatError(str(path), lineno, str(e)) from None
        norm = math.sqrt(sum(v * v for v in xyz))
        if abs(norm - 1.0) > FILE_UNIT_TOL:
            raise PointSetValidationError(
                f"{path}:{lineno}: norm {norm:.9g} deviates from 1 by more than {FILE_UNIT_TOL}"
            )
        rows.append([v / norm for v in xyz])
    if not rows:
        raise PointSetFormatError(str(path), 0, "no points found")
    return PointSet(np.array(rows), family=Family.FILE)


def separation_radius(X: PointSet, block: int = 2048) -> float:
    """Half the minimal pairwise geodesic distance (exact, all pairs)."""
    c = X.coords
    best = -1.0
    for start in range(0, len(c), block):
        g = c[start : start + block] @ c.T
        idx = np.arange(start, min(start + block, len(c)))
        g[idx - start, idx] = -np.inf
        best = max(best, float(g.max()))
    return 0.5 * math.acos(min(1.0, max(-1.0, best)))


def fill_distance(X: PointSet, probe_size: Optional[int] = None) -> float:
    """Lower estimate of the fill distance from a Fibonacci probe lattice."""
    n = probe_size or max(100 * X.N, PROBE_MIN)
    if n % 2 == 0:
        n += 1
    chord, _ = X.tree.query(_fibonacci_coords(n), k=1)
    return float(2.0 * np.arcsin(np.clip(chord.max() / 2.0, 0.0, 1.0)))


def mesh_metrics(X: PointSet) -> MeshMetrics:
    if X.N < 2:
        raise ValueError("mesh metrics need at least two points")
    q = separation_radius(X)
    h = fill_distance(X)
    return MeshMetrics(h=h, q=q, rho=h / q)


def nearest_neighbors(X: PointSet, j: int, n: int) -> np.ndarray:
    """n nearest nodes to x_j (j included), sorted by geodesic distance then index."""
    N = X.N
    if not 1 <= n <= N:
        raise ValueError(f"neighbour count must be in [1, {N}], got {n}")
    k = min(N, n + 8)
    if k == N:
        cand = np.arange(N)
    else:
        _, cand = X.tree.query(X.coords[j], k=k)
        cand = np.asarray(cand, dtype=np.int64)
    dist = geodesic_from(X.coords[cand], X.coords[j])
    dist[cand == j] = 0.0
    order = np.lexsort((cand, dist))
    return cand[order[:n]]

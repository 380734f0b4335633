from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

import numpy as np
import pandas as pd
import scipy.linalg as sla
import scipy.sparse as sp

from dm.global_dm import GlobalDM
from linalg.dense import general_eig, lu, solve_linear
from utils.errors import BlowUpError
from utils.io import write_csv
from utils.qc import ENERGY_SLACK_ABS, increases

log = logging.getLogger("kdm.dynamics")

RK4_REAL_LIMIT = 2.785
CPD_CLAMP = 1e-12

Energy = Callable[[np.ndarray], float]
Operator = Union[np.ndarray, sp.spmatrix]


def energy_pd(phi: np.ndarray, u: np.ndarray) -> float:
    """|u|^2 in the Phi^-1 norm."""
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        return 0.0
    return max(float(u @ solve_linear(phi, u)), 0.0)


def energy_cpd(A: np.ndarray, u: np.ndarray, a_norm: Optional[float] = None) -> float:
    """[u]^2_A = u^T A u; roundoff negatives down to -1e-12 |A| |u|^2 are reported as 0."""
    u = np.asarray(u, dtype=float)
    val = float(u @ (A @ u))
    if val < 0:
        a_norm = float(np.linalg.norm(A, 2)) if a_norm is None else a_norm
        if val >= -CPD_CLAMP * a_norm * float(u @ u):
            return 0.0
        log.warning("energy_cpd: negative seminorm %.3e beyond roundoff", val)
    return val


def energy_functional(dm: GlobalDM) -> Energy:
    """Energy of the DM's own trial space: Phi^-1 norm (PD) or the A seminorm (CPD)."""
    s = dm.kernel.cpd_sign
    if dm.mode == "pd":
        factor = lu(s * dm.pair.phi)

        def pd(u: np.ndarray) -> float:
            return max(float(u @ sla.lu_solve(factor, u, check_finite=False)), 0.0)

        return pd
    A = s * dm.A
    a_norm = float(np.linalg.norm(A, 2))

    def cpd(u: np.ndarray) -> float:
        return energy_cpd(A, u, a_norm)

    return cpd


def l2_energy(u: np.ndarray) -> float:
    return float(u @ u)


@dataclass(frozen=True, eq=False)
class EvolutionRun:
    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    dt: float
    method: str = "rk4"

    @property
    def l2norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def energy_increases(self, slack: float = ENERGY_SLACK_ABS):
        return increases(self.energies, slack)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "energy": self.energies, "l2norm": self.l2norms})

    def write(self, path: Path, config: Optional[Dict[str, Any]] = None) -> Path:
        return write_csv(self.to_frame(), path, config)


def spectral_radius(M: Operator) -> float:
    dense = M.toarray() if sp.issparse(M) else M
    return float(np.abs(general_eig(dense).values).max())


def default_dt(M: Operator, rho: Optional[float] = None) -> float:
    rho = spectral_radius(M) if rho is None else rho
    return 1.0 if rho == 0.0 else 1.0 / (2.0 * rho)


def evolve(
    M: Operator,
    u0: np.ndarray,
    dt: Optional[float] = None,
    steps: int = 100,
    energy: Optional[Energy] = None,
    rho: Optional[float] = None,
) -> EvolutionRun:
    """Classical RK4 on u' = M u with the energy of every recorded state."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    energy = energy or l2_energy
    if dt is None or rho is not None:
        rho = spectral_radius(M) if rho is None else rho
    if dt is None:
        dt = default_dt(M, rho)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if rho is not None and dt * rho > RK4_REAL_LIMIT:
        log.warning("dt*rho = %.3f exceeds the RK4 real-axis limit %.3f", dt * rho, RK4_REAL_LIMIT)
    u = np.array(u0, dtype=float)
    states = np.empty((steps + 1, u.size))
    energies = np.empty(steps + 1)
    states[0] = u
    energies[0] = energy(u)
    for n in range(1, steps + 1):
        k1 = M @ u
        k2 = M @ (u + 0.5 * dt * k1)
        k3 = M @ (u + 0.5 * dt * k2)
        k4 = M @ (u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise BlowUpError(n)
        states[n] = u
        energies[n] = energy(u)
    times = dt * np.arange(steps + 1)
    bad = increases(energies)
    if bad:
        log.info("energy increased at %d of %d steps (first at step %d)", len(bad), steps, bad[0])
    return EvolutionRun(times=times, states=states, energies=energies, dt=float(dt))

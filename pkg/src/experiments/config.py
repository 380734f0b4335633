from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import yaml

from dm.local_dm import stencil_size
from kernels.operators import SpectralOperator, check_compatibility, parse_operator
from kernels.profiles import ZonalKernel, parse_kernel
from sphere.points import Family
from utils.errors import ConfigError
from utils.paths import default_output_dir

log = logging.getLogger("kdm.config")

MEMORY_WARN_BYTES = 8e9


class Experiment(str, Enum):
    POINTS = "points"
    DM = "dm"
    SPECTRA = "spectra"
    RNORM = "rnorm"
    LOCALDIST = "localdist"
    ENERGY = "energy"
    DECOMP_REPORT = "decomp_report"


_ENV_MAP = {
    "out": "KDM_OUT",
    "seed": "KDM_SEED",
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment = Experiment.SPECTRA
    family: Family = Family.FIBONACCI
    N: Tuple[int, ...] = (1025,)
    kernel: str = "ss:m=3"
    operator: str = "p=0,-1"
    mtilde: Optional[int] = None
    mtilde_sweep: Tuple[int, ...] = ()
    K: Tuple[float, ...] = (5.0,)
    dt: Optional[float] = None
    steps: int = 1000
    out: str = field(default_factory=lambda: str(default_output_dir()))
    points_file: Optional[str] = None
    seed: int = 0
    iterations: int = 200
    orientation: str = "row"
    multiplicity: str = "eigenspace"

    def __post_init__(self):
        for name, value in (("N", self.N), ("K", self.K), ("mtilde_sweep", self.mtilde_sweep)):
            if not isinstance(value, tuple):
                raise ConfigError(name, f"expected a tuple, got {type(value).__name__}")
        if any(n < 1 for n in self.N):
            raise ConfigError("N", f"sizes must be positive, got {list(self.N)}")
        if any(not k > 0 for k in self.K):
            raise ConfigError("K", f"stencil parameters must be positive, got {list(self.K)}")
        if self.mtilde is not None and self.mtilde < 0:
            raise ConfigError("mtilde", f"must be >= 0, got {self.mtilde}")
        if any(mt < 0 for mt in self.mtilde_sweep):
            raise ConfigError("mtilde_sweep", f"entries must be >= 0, got {list(self.mtilde_sweep)}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt", f"must be positive, got {self.dt}")
        if self.steps < 0:
            raise ConfigError("steps", f"must be >= 0, got {self.steps}")
        if self.orientation not in ("row", "column"):
            raise ConfigError("orientation", f"must be 'row' or 'column', got {self.orientation!r}")
        if self.multiplicity not in ("eigenspace", "single"):
            raise ConfigError("multiplicity", f"must be 'eigenspace' or 'single', got {self.multiplicity!r}")
        if self.family is Family.FILE and not self.points_file:
            raise ConfigError("points_file", "family 'file' needs points_file")

    @property
    def kernel_obj(self) -> ZonalKernel:
        try:
            return parse_kernel(self.kernel)
        except ValueError as e:
            raise ConfigError("kernel", str(e)) from None

    @property
    def operator_obj(self) -> SpectralOperator:
        try:
            return parse_operator(self.operator)
        except ValueError as e:
            raise ConfigError("operator", str(e)) from None

    @property
    def resolved_mtilde(self) -> int:
        return self.kernel_obj.cpd_order if self.mtilde is None else self.mtilde

    @property
    def swept_mtildes(self) -> Tuple[int, ...]:
        return self.mtilde_sweep or (self.resolved_mtilde,)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @staticmethod
    def from_mapping(data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            if value is None:
                continue
            kwargs[key] = _coerce(key, value)
        return ExperimentConfig(**kwargs)

    @staticmethod
    def from_yaml(path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigError("config", f"{path} must hold a key: value mapping")
        return ExperimentConfig.from_mapping(data)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        kwargs = {k: _coerce(k, v) for k, v in overrides.items() if v is not None}
        return replace(self, **kwargs) if kwargs else self

    def with_env(self, environ: Optional[Mapping[str, str]] = None) -> "ExperimentConfig":
        env = os.environ if environ is None else environ
        return self.with_overrides(**{k: env.get(v) for k, v in _ENV_MAP.items()})

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["experiment"] = self.experiment.value
        d["family"] = self.family.value
        d["N"] = list(self.N)
        d["K"] = list(self.K)
        d["mtilde_sweep"] = list(self.mtilde_sweep)
        return d


def _as_tuple(value: Any) -> Tuple[Any, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(value)
    if isinstance(value, str):
        return tuple(v for v in value.replace(",", " ").split() if v)
    return (value,)


def _coerce(key: str, value: Any) -> Any:
    try:
        if key == "experiment":
            return Experiment(value)
        if key == "family":
            return Family(value)
        if key == "N":
            return tuple(int(v) for v in _as_tuple(value))
        if key == "K":
            return tuple(float(v) for v in _as_tuple(value))
        if key == "mtilde_sweep":
            return tuple(int(v) for v in _as_tuple(value))
        if key in ("mtilde", "steps", "seed", "iterations"):
            return int(value)
        if key == "dt":
            return float(value)
        if key in ("kernel", "operator", "out", "points_file", "orientation", "multiplicity"):
            return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(key, f"invalid value {value!r}: {e}") from None
    raise ConfigError(key, "unknown configuration key")


def load_config(path: Optional[str] = None, **overrides: Any) -> ExperimentConfig:
    """Explicit path, then $KDM_CONFIG, then defaults; env and CLI overrides on top."""
    candidate = path or os.getenv("KDM_CONFIG")
    if candidate:
        if not Path(candidate).is_file():
            raise ConfigError("config", f"file not found: {candidate}")
        cfg = ExperimentConfig.from_yaml(candidate)
        log.info("config loaded from %s", candidate)
    else:
        cfg = ExperimentConfig()
    return cfg.with_env().with_overrides(**overrides)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    errors: List[str]
    warnings: List[str]
    memory_bytes: float

    def lines(self) -> List[str]:
        head = "OK" if self.ok else "INVALID"
        return [head] + [f"error: {e}" for e in self.errors] + [f"warning: {w}" for w in self.warnings]


def validate(cfg: ExperimentConfig) -> ValidationReport:
    """Static checks before any heavy work; never raises on an invalid combination."""
    errors: List[str] = []
    warnings: List[str] = []
    kernel: Optional[ZonalKernel] = None
    op: Optional[SpectralOperator] = None
    try:
        kernel = cfg.kernel_obj
    except ConfigError as e:
        errors.append(str(e))
    try:
        op = cfg.operator_obj
    except ConfigError as e:
        errors.append(str(e))
    mtilde = cfg.mtilde
    mtildes: Tuple[int, ...] = ()
    if kernel is not None:
        mtilde = kernel.cpd_order if mtilde is None else mtilde
        mtildes = cfg.mtilde_sweep or (mtilde,)
        for mt in mtildes:
            if mt < kernel.cpd_order:
                errors.append(
                    f"mtilde: {mt} is below the minimal CPD order {kernel.cpd_order} of {kernel.label}"
                )
        if op is not None:
            compat = check_compatibility(kernel, op, max(min(mtildes), kernel.cpd_order))
            if not compat:
                errors.append(f"operator: {compat.message}")
    if cfg.mtilde_sweep and cfg.experiment is not Experiment.RNORM:
        warnings.append(f"mtilde_sweep: ignored by the {cfg.experiment.value} experiment")
    if cfg.family is Family.FIBONACCI:
        even = [n for n in cfg.N if n % 2 == 0 or n < 3]
        if even:
            errors.append(f"N: Fibonacci point sets are only defined for odd N >= 3, got {even}")
    if cfg.family is Family.FILE and cfg.points_file and not Path(cfg.points_file).is_file():
        errors.append(f"points_file: not found: {cfg.points_file}")
    M = max(mtildes or (mtilde or 0,)) ** 2
    for n_pts in cfg.N:
        if n_pts <= M:
            errors.append(f"N: {n_pts} must exceed the polynomial dimension M={M}")
            continue
        if cfg.experiment in (Experiment.SPECTRA, Experiment.LOCALDIST, Experiment.DM) and n_pts >= 2:
            for K in cfg.K:
                n = stencil_size(K, n_pts, mtilde or 0)
                if n == n_pts:
                    warnings.append(f"K: stencil size for K={K:g} covers all N={n_pts} nodes")
    memory = float(8 * max(cfg.N) ** 2)
    if memory > MEMORY_WARN_BYTES:
        warnings.append(f"memory: one dense N x N matrix at N={max(cfg.N)} takes {memory / 1e9:.1f} GB")
    return ValidationReport(ok=not errors, errors=errors, warnings=warnings, memory_bytes=memory)

from __future__ import annotations

import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List

import numpy as np
import pandas as pd

from analysis.dynamics import energy_functional, evolve
from analysis.spectra import (
    fit_rate,
    filtered_spectra_distance,
    local_distance_table,
    r_norm_table,
    spectrum_report,
)
from dm.block_decomp import decompose, report, separation_gamma, sylvester_diagonalize
from dm.global_dm import build_global_dm
from dm.local_dm import assemble_local_dm
from sphere.points import Family, PointSet, generate_pointset, load_pointset, mesh_metrics
from utils.errors import ConfigError
from utils.io import write_csv, write_json, write_text
from utils.qc import adjacent_inversions, increases

from .config import Experiment, ExperimentConfig, validate

log = logging.getLogger("kdm.runner")


@dataclass
class RunResult:
    experiment: Experiment
    files: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)


def build_pointset(cfg: ExperimentConfig, N: int) -> PointSet:
    if cfg.family is Family.FILE:
        return load_pointset(str(cfg.points_file))
    return generate_pointset(cfg.family, N, cfg.iterations)


def _sizes(cfg: ExperimentConfig) -> List[int]:
    # a point file fixes N; the N list is ignored then
    return [0] if cfg.family is Family.FILE else list(cfg.N)


def _tag(X: PointSet) -> str:
    return f"{X.family.value}_N{X.N}"


def _k_tag(K: float) -> str:
    return f"K{K:g}".replace(".", "p")


def run_points(cfg: ExperimentConfig, res: RunResult):
    echo = cfg.to_dict()
    for N in _sizes(cfg):
        X = build_pointset(cfg, N)
        metrics = mesh_metrics(X)
        res.files.append(X.write(cfg.out_dir / f"points_{_tag(X)}.txt", echo))
        res.files.append(
            write_json(
                {"N": X.N, "family": X.family.value, "h": metrics.h, "q": metrics.q, "rho": metrics.rho},
                cfg.out_dir / f"points_{_tag(X)}.json",
                echo,
            )
        )
        res.summary[str(X.N)] = {"h": metrics.h, "q": metrics.q, "rho": metrics.rho}


def run_dm(cfg: ExperimentConfig, res: RunResult):
    kernel, op, mtilde, echo = cfg.kernel_obj, cfg.operator_obj, cfg.resolved_mtilde, cfg.to_dict()
    for N in _sizes(cfg):
        X = build_pointset(cfg, N)
        dm = build_global_dm(kernel, op, X, mtilde)
        buf = io.StringIO()
        np.savetxt(buf, dm.m, fmt="%.17g", delimiter=",")
        res.files.append(write_text(cfg.out_dir / f"dm_global_{_tag(X)}.csv", buf.getvalue(), echo))
        for K in cfg.K:
            ldm = assemble_local_dm(kernel, op, X, K, mtilde, orientation=cfg.orientation, progress=True)
            res.files.append(ldm.write_triplets(cfg.out_dir / f"dm_local_{_tag(X)}_{_k_tag(K)}.txt", echo))


def run_spectra(cfg: ExperimentConfig, res: RunResult):
    kernel, op, mtilde, echo = cfg.kernel_obj, cfg.operator_obj, cfg.resolved_mtilde, cfg.to_dict()
    for N in _sizes(cfg):
        X = build_pointset(cfg, N)
        glob = spectrum_report(build_global_dm(kernel, op, X, mtilde).m)
        res.files.append(glob.write(cfg.out_dir / f"spectrum_global_{_tag(X)}.csv", echo))
        by_K: Dict[str, Any] = {}
        for K in cfg.K:
            ldm = assemble_local_dm(kernel, op, X, K, mtilde, orientation=cfg.orientation, progress=True)
            loc = spectrum_report(ldm.to_dense())
            dist = filtered_spectra_distance(loc, glob, op, mtilde, cfg.multiplicity)
            res.files.append(loc.write(cfg.out_dir / f"spectrum_local_{_tag(X)}_{_k_tag(K)}.csv", echo))
            by_K[f"{K:g}"] = {
                "K": K,
                "n": ldm.n,
                "local": loc.summary(),
                "dist_rel": dist.value,
                "dist_abs": dist.value_abs,
            }
        summary = {"N": X.N, "global": glob.summary(), "by_K": by_K}
        res.files.append(write_json(summary, cfg.out_dir / f"spectra_{_tag(X)}.json", echo))
        res.summary[str(X.N)] = summary


def _fit_summary(xs, ys, model: str) -> Dict[str, Any]:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (y > 0)
    if model == "algebraic":
        ok &= x > 0
    if ok.sum() < 3:
        log.warning("%s fit skipped: only %d usable points", model, int(ok.sum()))
        return {"model": model, "points": int(ok.sum()), "slope": None, "intercept": None, "residual": None}
    fit = fit_rate(x[ok], y[ok], model)
    return {
        "model": model,
        "points": int(ok.sum()),
        "slope": fit.slope,
        "intercept": fit.intercept,
        "residual": fit.residual,
    }


def run_rnorm(cfg: ExperimentConfig, res: RunResult):
    if cfg.family is Family.FILE:
        raise ConfigError("family", "rnorm sweeps generated families over the N list")
    echo = cfg.to_dict()
    tables = []
    fits = {}
    for mtilde in cfg.swept_mtildes:
        table = r_norm_table(
            cfg.kernel_obj,
            cfg.operator_obj,
            mtilde,
            cfg.family,
            cfg.N,
            cfg.iterations,
            progress=True,
        )
        tables.append(table)
        ordered = table.sort_values("q", ascending=False)["normR"].to_numpy()
        fit = _fit_summary(table["q"], table["normR"], "algebraic")
        fit["increases_as_q_decreases"] = len(increases(ordered[np.isfinite(ordered)], 0.0))
        fits[str(mtilde)] = fit
    res.files.append(write_csv(pd.concat(tables, ignore_index=True), cfg.out_dir / "rnorm.csv", echo))
    res.files.append(write_json(fits, cfg.out_dir / "rnorm_fit.json", echo))
    res.summary = fits


def run_localdist(cfg: ExperimentConfig, res: RunResult):
    kernel, op, mtilde, echo = cfg.kernel_obj, cfg.operator_obj, cfg.resolved_mtilde, cfg.to_dict()
    tables = []
    fits = {}
    for N in _sizes(cfg):
        X = build_pointset(cfg, N)
        table = local_distance_table(
            kernel, op, mtilde, X, cfg.K, cfg.orientation, cfg.multiplicity, progress=True
        )
        tables.append(table)
        fit = _fit_summary(table["K"], table["dist_rel"], "exponential")
        fit["inversions"] = adjacent_inversions(table.sort_values("K")["dist_rel"].to_numpy())
        fits[str(X.N)] = fit
    res.files.append(write_csv(pd.concat(tables, ignore_index=True), cfg.out_dir / "localdist.csv", echo))
    res.files.append(write_json(fits, cfg.out_dir / "localdist_fit.json", echo))
    res.summary = fits


def run_energy(cfg: ExperimentConfig, res: RunResult):
    kernel, op, mtilde, echo = cfg.kernel_obj, cfg.operator_obj, cfg.resolved_mtilde, cfg.to_dict()
    log.info("energy run for %s (%s spectrum)", op.label, op.sign_profile)
    for N in _sizes(cfg):
        X = build_pointset(cfg, N)
        dm = build_global_dm(kernel, op, X, mtilde)
        u0 = np.random.default_rng(cfg.seed).standard_normal(X.N)
        run = evolve(dm.m, u0, cfg.dt, cfg.steps, energy_functional(dm))
        res.files.append(run.write(cfg.out_dir / f"energy_{_tag(X)}.csv", echo))
        slack = 1e-12 + 1e-12 * float(run.energies[0])
        bad = run.energy_increases(slack)
        verdict = {
            "N": X.N,
            "mode": dm.mode,
            "dt": run.dt,
            "steps": cfg.steps,
            "energy_start": float(run.energies[0]),
            "energy_end": float(run.energies[-1]),
            "increases": len(bad),
            "first_increase": bad[0] if bad else None,
            "non_increasing": not bad,
        }
        res.files.append(write_json(verdict, cfg.out_dir / f"energy_{_tag(X)}.json", echo))
        res.summary[str(X.N)] = verdict


def run_decomp_report(cfg: ExperimentConfig, res: RunResult):
    kernel, op, mtilde, echo = cfg.kernel_obj, cfg.operator_obj, cfg.resolved_mtilde, cfg.to_dict()
    gap = separation_gamma(op, mtilde)
    for N in _sizes(cfg):
        X = build_pointset(cfg, N)
        bd = decompose(build_global_dm(kernel, op, X, mtilde), strict=False)
        sylv = sylvester_diagonalize(bd)
        doc = report(bd, sylv)
        doc.update(
            N=X.N,
            residual=bd.residual,
            lam_flat=gap.lam_flat if math.isfinite(gap.lam_flat) else None,
            lam_sharp=gap.lam_sharp if math.isfinite(gap.lam_sharp) else None,
            gamma_operator=gap.gamma,
        )
        res.files.append(write_json(doc, cfg.out_dir / f"decomp_{_tag(X)}.json", echo))
        res.summary[str(X.N)] = doc


_RUNNERS: Dict[Experiment, Callable[[ExperimentConfig, RunResult], None]] = {
    Experiment.POINTS: run_points,
    Experiment.DM: run_dm,
    Experiment.SPECTRA: run_spectra,
    Experiment.RNORM: run_rnorm,
    Experiment.LOCALDIST: run_localdist,
    Experiment.ENERGY: run_energy,
    Experiment.DECOMP_REPORT: run_decomp_report,
}


def run(cfg: ExperimentConfig) -> RunResult:
    """Validate, then run one experiment and write its outputs under cfg.out."""
    rep = validate(cfg)
    for w in rep.warnings:
        log.warning("%s", w)
    if not rep.ok:
        field_name, _, message = rep.errors[0].partition(": ")
        raise ConfigError(field_name, message)
    t0 = time.perf_counter()
    res = RunResult(experiment=cfg.experiment)
    _RUNNERS[cfg.experiment](cfg, res)
    log.info(
        "%s finished in %.1fs, %d files under %s",
        cfg.experiment.value, time.perf_counter() - t0, len(res.files), cfg.out_dir,
    )
    return res

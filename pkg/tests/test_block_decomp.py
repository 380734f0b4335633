import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from analysis.spectra import max_min_distance
from dm.block_decomp import (
    SylvesterCase,
    bauer_fike_cpd,
    bauer_fike_diag,
    bauer_fike_pd,
    decompose,
    empirical_gap,
    report,
    separation_gamma,
    sylvester_diagonalize,
    sylvester_solve,
)
from dm.global_dm import build_global_dm
from dm.local_dm import assemble_local_dm
from kernels.operators import parse_operator
from linalg.dense import general_eig, spectral_norm
from utils.errors import CPDViolationError
from utils.qc import dominates


@pytest.fixture(scope="module")
def bd101(dm_ss3_101):
    return decompose(dm_ss3_101)


@pytest.fixture(scope="module")
def bd401(dm_ss3_401):
    return decompose(dm_ss3_401)


@pytest.mark.parametrize("name", ["dm_ss3_101", "dm_ss3_401"])
def test_factorization_residual(name, request):
    dm = request.getfixturevalue(name)
    bd = decompose(dm)
    assert np.linalg.norm(dm.m - bd.reconstruct(), 2) <= 1e-8 * np.linalg.norm(dm.m, 2)
    assert bd.residual <= 1e-8 * np.linalg.norm(dm.m, 2)


def test_decompose_scale_needs_no_power_iteration(dm_ss3_101, caplog):
    with caplog.at_level(logging.WARNING, logger="kdm"):
        decompose(dm_ss3_101)
    assert not [r for r in caplog.records if "power iteration" in r.getMessage()]


def test_biorthogonality(bd101):
    N = bd101.V.shape[0]
    np.testing.assert_allclose(bd101.V_inv @ bd101.V, np.eye(N), atol=1e-9 * bd101.kappa)
    np.testing.assert_allclose(bd101.Z_dag @ bd101.Z, np.eye(N - 9), atol=1e-9 * bd101.kappa)


def test_blocks(bd101):
    assert bd101.M == 9
    assert bd101.R.shape == (9, 92)
    assert bd101.theta.min() > 0
    np.testing.assert_allclose(bd101.lam, [0, 2, 2, 2, 6, 6, 6, 6, 6])
    assert np.all(np.linalg.eigvalsh(bd101.A_hat) > 0)


def test_separation_values():
    gap = separation_gamma(parse_operator("p=0,-1"), 3)
    assert (gap.lam_flat, gap.lam_sharp, gap.gamma) == (6.0, 12.0, 6.0)
    neg = separation_gamma(parse_operator("p=0,1"), 3)
    assert neg.gamma is None and neg.lam_sharp == -math.inf


def test_empirical_gap_at_least_operator_gap(bd401):
    gap = separation_gamma(parse_operator("p=0,-1"), 3)
    scale = np.abs(bd401.theta).max()
    assert bd401.theta.min() - bd401.lam.max() >= gap.gamma - 1e-6 * scale
    assert empirical_gap(bd401.lam, bd401.theta) >= gap.gamma - 1e-6 * scale


def test_sylvester_disjoint(bd101):
    sylv = sylvester_diagonalize(bd101)
    assert sylv.case is SylvesterCase.DISJOINT and sylv.solvable
    X = sylv.X_tilde
    residual = -bd101.lam[:, None] * X + X * bd101.theta[None, :] - bd101.R
    assert np.abs(residual).max() <= 1e-10 * np.abs(bd101.R).max()


def test_sylvester_overlap_cases():
    lam = np.array([1.0, 2.0])
    theta = np.array([1.0, 3.0])
    consistent = sylvester_solve(lam, theta, np.array([[0.0, 1.0], [1.0, 1.0]]))
    assert consistent.case is SylvesterCase.OVERLAPPING_CONSISTENT
    assert consistent.X_tilde[0, 0] == 0.0 and consistent.X_tilde[0, 1] == pytest.approx(0.5)
    defective = sylvester_solve(lam, theta, np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert defective.case is SylvesterCase.DEFECTIVE and not defective.solvable
    with pytest.raises(ValueError):
        bauer_fike_diag(None, defective, 1.0)


def test_cpd_violation_detected(dm_ss3_101):
    flipped = replace(dm_ss3_101, pair=replace(dm_ss3_101.pair, phi=-dm_ss3_101.pair.phi))
    with pytest.raises(CPDViolationError):
        decompose(flipped)


def test_pd_decomposition_has_empty_polynomial_block(imq2, lap, fib101):
    dm = build_global_dm(imq2, lap, fib101)
    bd = decompose(dm)
    assert bd.M == 0 and bd.R.shape == (0, 101) and bd.norm_R == 0.0
    sylv = sylvester_diagonalize(bd)
    assert bauer_fike_diag(bd, sylv, 1e-3).bound == pytest.approx(bd.kappa * 1e-3)


def test_report_keys(bd101):
    doc = report(bd101, sylvester_diagonalize(bd101))
    assert set(doc) == {
        "norm_P", "norm_Pdag", "norm_Z", "norm_Zdag", "norm_A", "norm_R",
        "kappa", "gamma", "theta_min", "theta_max", "case",
    }
    assert doc["case"] == "disjoint" and doc["kappa"] >= 1.0


def _perturbations(dm, rng):
    E = rng.standard_normal(dm.m.shape)
    yield "random", dm.m + 1e-6 * E / np.linalg.norm(E, 2)
    for K in (3, 5):
        yield f"local K={K}", assemble_local_dm(dm.kernel, dm.op, dm.X, K, dm.mtilde).to_dense()


def test_bauer_fike_cpd_theorems(dm_ss3_401, bd401, rng):
    sylv = sylvester_diagonalize(bd401)
    mu = general_eig(dm_ss3_401.m).values
    for name, Me in _perturbations(dm_ss3_401, rng):
        diff = np.linalg.norm(dm_ss3_401.m - Me, 2)
        shift = max_min_distance(general_eig(Me).values, mu)
        assert dominates(bauer_fike_cpd(bd401, diff), shift), f"block bound fails for {name}"
        diag = bauer_fike_diag(bd401, sylv, diff)
        assert dominates(diag.bound, shift), f"diagonalized bound fails for {name}"
        assert diag.sharp <= diag.bound * (1 + 1e-9)


def test_bauer_fike_pd(imq2, minus_lap, fib101, rng):
    dm = build_global_dm(imq2, minus_lap, fib101)
    E = rng.standard_normal(dm.m.shape)
    Me = dm.m + 1e-6 * E / spectral_norm(E)
    shift = max_min_distance(general_eig(Me).values, general_eig(dm.m).values)
    assert dominates(bauer_fike_pd(dm.pair.phi, spectral_norm(dm.m - Me)), shift)

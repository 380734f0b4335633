import math

import numpy as np
import pytest

from analysis.spectra import (
    SpectrumReport,
    filtered_spectra_distance,
    fit_rate,
    local_distance_table,
    max_min_distance,
    r_norm_table,
    spectrum_report,
)
from kernels.profiles import inverse_multiquadric
from linalg.dense import Spectrum
from sphere.points import Family
from utils.io import read_csv, read_header
from utils.qc import dominates

EXACT = [0.0] + [2.0] * 3 + [6.0] * 5


def _report(values):
    return SpectrumReport.from_spectrum(Spectrum.from_values(np.asarray(values)))


def test_max_min_distance():
    a = np.array([1.0, 2.0])
    b = np.array([0.5, 2.5])
    assert max_min_distance(a, b) == pytest.approx(0.5)
    assert max_min_distance(a, b, relative=True) == pytest.approx(0.6)
    assert max_min_distance(np.array([]), b) == 0.0
    with pytest.raises(ValueError):
        max_min_distance(a, np.array([]))


def test_max_min_distance_complex():
    assert max_min_distance(np.array([1j]), np.array([0.0, 2.0 + 1j])) == pytest.approx(1.0)


def test_spectrum_report_summary(tmp_path):
    rep = spectrum_report(np.diag([3.0, -1.0, 2.0]))
    expected = {"N": 3, "spectral_radius": 3.0, "max_abs_imag": 0.0, "min_real": -1.0}
    assert rep.summary() == pytest.approx(expected, abs=1e-12)
    path = rep.write(tmp_path / "spectrum.csv", {"N": 3})
    assert read_header(path) == {"N": 3}
    np.testing.assert_allclose(read_csv(path)["re"], [-1.0, 2.0, 3.0], atol=1e-12)


def test_filtered_distance_excludes_exact_eigenvalues(minus_lap):
    glob = _report(EXACT + [12.0, 20.0])
    loc = _report(EXACT + [12.1, 19.0])
    dist = filtered_spectra_distance(loc, glob, minus_lap, 3)
    assert dist.value == pytest.approx(0.05)
    assert dist.value_abs == pytest.approx(1.0)
    assert [len(lr) for lr, _ in dist.excluded] == [1, 3, 5]
    np.testing.assert_allclose(dist.retained_local, [12.1, 19.0])
    assert list(dist.matching) == [0, 1]


def test_filtered_distance_single_multiplicity(minus_lap):
    glob = _report(EXACT + [12.0])
    dist = filtered_spectra_distance(glob, glob, minus_lap, 3, multiplicity="single")
    assert [len(lr) for lr, _ in dist.excluded] == [1, 1, 1]
    assert dist.retained_local.size == 7
    assert dist.value == 0.0


def test_filtered_distance_is_directed(minus_lap):
    small = _report(EXACT + [12.0])
    large = _report(EXACT + [12.0, 20.0])
    into_large = filtered_spectra_distance(small, large, minus_lap, 3)
    into_small = filtered_spectra_distance(large, small, minus_lap, 3)
    assert into_large.value == 0.0
    assert into_small.value == pytest.approx(8.0 / 12.0)
    assert into_small.value_abs == pytest.approx(8.0)


def test_filtered_distance_rejects_bad_input(minus_lap):
    glob = _report(EXACT)
    with pytest.raises(ValueError):
        filtered_spectra_distance(glob, glob, minus_lap, 3, multiplicity="pairs")
    with pytest.raises(ValueError):
        filtered_spectra_distance(_report([0.0, 2.0]), glob, minus_lap, 3)


def test_fit_rate_algebraic_and_exponential():
    x = np.array([0.1, 0.2, 0.4, 0.8])
    alg = fit_rate(x, 3.0 * x**2)
    assert alg.slope == pytest.approx(2.0) and alg.intercept == pytest.approx(math.log(3.0))
    assert alg.residual < 1e-12
    k = np.arange(3.0, 8.0)
    assert fit_rate(k, 5.0 * np.exp(-0.7 * k), "exponential").slope == pytest.approx(-0.7)


def test_fit_rate_drops_non_finite_pairs():
    x = np.array([0.1, 0.2, math.nan, 0.4, 0.8])
    y = np.array([0.03, 0.12, 0.2, math.nan, 1.92])
    fit = fit_rate(x, y)
    assert fit.slope == pytest.approx(2.0)
    with pytest.raises(ValueError):
        fit_rate([0.1, math.nan, 0.4], [1.0, 2.0, math.inf])


@pytest.mark.parametrize(
    "xs, ys, model",
    [
        ([1.0, 2.0], [1.0, 2.0], "algebraic"),
        ([1.0, 2.0, 3.0], [1.0, -2.0, 3.0], "algebraic"),
        ([-1.0, 2.0, 3.0], [1.0, 2.0, 3.0], "algebraic"),
        ([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], "cubic"),
    ],
)
def test_fit_rate_rejects(xs, ys, model):
    with pytest.raises(ValueError):
        fit_rate(xs, ys, model)


def test_r_norm_table(ss3, minus_lap):
    df = r_norm_table(ss3, minus_lap, 3, Family.FIBONACCI, [5, 101, 201])
    assert list(df.columns) == ["family", "kernel", "m", "mtilde", "N", "q", "normR"]
    assert math.isnan(df["normR"].iloc[0])
    ok = df.dropna()
    assert list(ok["N"]) == [101, 201]
    assert ok["q"].iloc[1] < ok["q"].iloc[0]
    assert np.all(ok["normR"] > 0)


def test_r_norm_table_without_polynomial_block(minus_lap):
    df = r_norm_table(inverse_multiquadric(1.0), minus_lap, 0, Family.FIBONACCI, [101])
    assert df["normR"].iloc[0] == 0.0
    assert df["q"].iloc[0] > 0


def test_local_distance_table(ss3, minus_lap, fib101, dm_ss3_101):
    df = local_distance_table(ss3, minus_lap, 3, fib101, [3, 4], dm=dm_ss3_101)
    assert list(df.columns) == [
        "family", "kernel", "m", "mtilde", "N", "K", "n",
        "dist_rel", "dist_abs", "bound_prop42", "bound_thm44",
    ]
    assert list(df["K"]) == [3.0, 4.0]
    assert np.all(df["n"] <= 101) and np.all(df["dist_rel"] >= 0)
    for _, row in df.iterrows():
        assert dominates(row["bound_prop42"], row["dist_abs"])
        assert dominates(row["bound_thm44"], row["dist_abs"])

import math

import numpy as np
import pytest

from sphere.points import (
    Family,
    PointSet,
    SpherePoint,
    generate_fibonacci,
    generate_hammersley,
    generate_min_energy,
    generate_pointset,
    geodesic_distance,
    load_pointset,
    mesh_metrics,
    nearest_neighbors,
    riesz_energy,
    separation_radius,
)
from utils.errors import PointSetFormatError, PointSetValidationError


def _random_sphere(n, rng):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ((1, 0, 0), (0, 1, 0), math.pi / 2),
        ((0, 0, 1), (0, 0, 1), 0.0),
        ((0, 0, 1), (0, 0, -1), math.pi),
    ],
)
def test_geodesic_distance_examples(a, b, expected):
    assert geodesic_distance(SpherePoint(*a), SpherePoint(*b)) == pytest.approx(expected, abs=1e-15)


def test_geodesic_clamps_roundoff():
    a = np.array([1.0, 0.0, 0.0])
    assert geodesic_distance(a, a * (1 + 1e-15)) == 0.0


def test_triangle_inequality(rng):
    pts = _random_sphere(300, rng)
    for a, b, c in pts.reshape(100, 3, 3):
        ab, bc, ac = geodesic_distance(a, b), geodesic_distance(b, c), geodesic_distance(a, c)
        assert ac <= ab + bc + 1e-12, f"triangle inequality broken: {ac} > {ab} + {bc}"


def test_sphere_point_rejects_non_unit():
    with pytest.raises(PointSetValidationError):
        SpherePoint(0.0, 0.0, 0.5)


def test_pointset_rejects_duplicates():
    with pytest.raises(PointSetValidationError, match="duplicates"):
        PointSet(np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]))


def test_fibonacci_three_points():
    X = generate_fibonacci(3)
    assert X.N == 3
    np.testing.assert_allclose(X.coords[1], [1.0, 0.0, 0.0], atol=1e-15)
    assert X.family is Family.FIBONACCI


@pytest.mark.parametrize("N", [2, 4, 1024, 1])
def test_fibonacci_rejects_even_or_small(N):
    with pytest.raises(ValueError):
        generate_fibonacci(N)


def test_fibonacci_cardinality_4097():
    X = generate_fibonacci(4097)
    assert X.N == 4097
    assert np.allclose(np.linalg.norm(X.coords, axis=1), 1.0, atol=1e-12)


def test_fibonacci_separation_constant():
    N = 1025
    q = separation_radius(generate_fibonacci(N))
    assert 1.2 <= q * math.sqrt(N) <= 1.9, f"q*sqrt(N) = {q * math.sqrt(N):.4f}"


def test_fibonacci_quasi_uniform_across_sizes():
    scaled = [separation_radius(generate_fibonacci(N)) * math.sqrt(N) for N in (101, 401, 1025, 2025)]
    assert max(scaled) / min(scaled) < 1.5, f"q*sqrt(N) spread: {scaled}"


def test_hammersley_first_points():
    X = generate_hammersley(2)
    np.testing.assert_allclose(X.coords[0, 2], 0.5)
    np.testing.assert_allclose(X.coords[1, 2], -0.5)
    assert math.atan2(X.coords[0, 1], X.coords[0, 0]) == pytest.approx(0.0, abs=1e-15)
    assert abs(math.atan2(X.coords[1, 1], X.coords[1, 0])) == pytest.approx(math.pi)


def test_hammersley_distinct():
    X = generate_hammersley(1024)
    assert separation_radius(X) > 0


def test_min_energy_tetrahedron():
    X = generate_min_energy(4, iterations=500)
    d = [geodesic_distance(X.coords[i], X.coords[j]) for i in range(4) for j in range(i + 1, 4)]
    assert max(d) - min(d) < 1e-3, f"tetrahedron edges {d}"
    assert np.mean(d) == pytest.approx(math.acos(-1.0 / 3.0), abs=1e-3)


def test_min_energy_descends():
    X = generate_min_energy(12, iterations=50)
    init = generate_hammersley(12)
    assert riesz_energy(X.coords) < riesz_energy(init.coords)
    assert X.family is Family.MIN_ENERGY


def test_min_energy_rejects_small():
    with pytest.raises(ValueError):
        generate_min_energy(3)


@pytest.mark.slow
def test_min_energy_keeps_mesh_ratio_bounded():
    # even N starts from the Hammersley set
    init = mesh_metrics(generate_hammersley(1024))
    X = generate_min_energy(1024, iterations=500)
    assert X.N == 1024
    assert mesh_metrics(X).rho < 1.05 * init.rho


def test_generate_pointset_dispatch():
    assert generate_pointset("fibonacci", 11).family is Family.FIBONACCI
    assert generate_pointset(Family.HAMMERSLEY, 10).family is Family.HAMMERSLEY
    with pytest.raises(ValueError):
        generate_pointset("file", 10)


def test_load_pointset_basic(tmp_path):
    p = tmp_path / "two.txt"
    p.write_text("# poles and equator\n0 0 1\n1 0 0\n")
    X = load_pointset(p)
    assert X.N == 2 and X.family is Family.FILE
    np.testing.assert_array_equal(X.coords, [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


def test_load_pointset_normalizes_small_deviation(tmp_path):
    p = tmp_path / "near.txt"
    p.write_text("0 0 1.0000004\n")
    X = load_pointset(p)
    assert np.linalg.norm(X.coords[0]) == pytest.approx(1.0, abs=1e-15)


def test_load_pointset_rejects_bad_norm(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0 0 1\n0 0 0.5\n")
    with pytest.raises(PointSetValidationError):
        load_pointset(p)


@pytest.mark.parametrize("row", ["0 0", "0 0 1 2", "0 x 1"])
def test_load_pointset_reports_line(tmp_path, row):
    p = tmp_path / "malformed.txt"
    p.write_text(f"1 0 0\n{row}\n")
    with pytest.raises(PointSetFormatError) as exc:
        load_pointset(p)
    assert exc.value.line == 2


def test_written_pointset_loads_back(tmp_path):
    X = generate_fibonacci(51)
    path = X.write(tmp_path / "fib.txt", {"family": "fibonacci"})
    Y = load_pointset(path)
    np.testing.assert_allclose(Y.coords, X.coords, atol=1e-15)


def test_mesh_metrics_two_poles():
    X = PointSet(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]))
    mm = mesh_metrics(X)
    assert mm.q == pytest.approx(math.pi / 2, abs=1e-12)
    assert mm.h == pytest.approx(math.pi / 2, abs=1e-3)


def test_mesh_metrics_q_matches_brute_force(fib101):
    G = np.clip(fib101.coords @ fib101.coords.T, -1, 1)
    np.fill_diagonal(G, -1.0)
    assert mesh_metrics(fib101).q == pytest.approx(0.5 * math.acos(G.max()), rel=1e-12)


def test_mesh_ratio_fibonacci_vs_hammersley():
    fib = mesh_metrics(generate_fibonacci(1025))
    ham = mesh_metrics(generate_hammersley(1024))
    assert fib.rho < 2.0, f"Fibonacci rho {fib.rho:.3f}"
    assert fib.h > 0 and fib.rho >= 1.0
    assert ham.rho > fib.rho


def test_nearest_neighbors_self_first(fib101):
    assert nearest_neighbors(fib101, 17, 1).tolist() == [17]
    allidx = nearest_neighbors(fib101, 17, fib101.N)
    assert sorted(allidx.tolist()) == list(range(fib101.N))


def test_nearest_neighbors_brute_force(fib101):
    d = np.arccos(np.clip(fib101.coords @ fib101.coords[0], -1, 1))
    d[0] = 0.0
    got = nearest_neighbors(fib101, 0, 7)
    assert got[0] == 0
    np.testing.assert_allclose(d[got], np.sort(d)[:7], atol=1e-14)


def test_nearest_neighbors_rejects_too_many(fib101):
    with pytest.raises(ValueError):
        nearest_neighbors(fib101, 0, fib101.N + 1)


def test_nearest_neighbors_rotation_invariant(rng):
    X = PointSet(_random_sphere(200, rng))
    Y = X.rotated(_random_rotation(rng))
    for j in (0, 57, 199):
        assert set(nearest_neighbors(X, j, 9).tolist()) == set(nearest_neighbors(Y, j, 9).tolist())


def test_load_pointset_rejects_undecodable_bytes(tmp_path):
    p = tmp_path / "binary.txt"
    p.write_bytes(b"0 0 1\n\xff\xfe\n")
    with pytest.raises(PointSetFormatError, match="not UTF-8"):
        load_pointset(p)

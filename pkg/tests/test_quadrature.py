import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from femcompare.mesh import inside_reference
from femcompare.quadrature import gauss_legendre_1d, required_order, rule_for_geometry

GEOMS = ["segment", "triangle", "quadrilateral"]
MEASURE = {"segment": 2.0, "triangle": 0.5, "quadrilateral": 1.0}


def exact_monomial(geom, a, b=0):
    if geom == "segment":
        return 0.0 if a % 2 else 2.0 / (a + 1)
    if geom == "quadrilateral":
        return 1.0 / ((a + 1) * (b + 1))
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def test_one_point():
    r = gauss_legendre_1d(1)
    assert r.points.ravel().tolist() == [0.0]
    assert r.weights.tolist() == [2.0]


def test_two_points():
    r = gauss_legendre_1d(2)
    assert np.allclose(sorted(r.points.ravel()), [-1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-15)
    assert np.allclose(r.weights, [1.0, 1.0], atol=1e-15)
    assert r.weights @ r.points[:, 0] ** 3 == pytest.approx(0.0, abs=1e-16)


@pytest.mark.parametrize("n", [0, 33, -1])
def test_point_count_range(n):
    with pytest.raises(ValueError):
        gauss_legendre_1d(n)


def test_quad_accuracy_one():
    r = rule_for_geometry("quadrilateral", 1)
    assert len(r) == 1
    assert np.allclose(r.points, [[0.5, 0.5]])
    assert r.weights.tolist() == [1.0]


def test_quad_xy():
    r = rule_for_geometry("quadrilateral", 3)
    assert r.weights @ (r.points[:, 0] * r.points[:, 1]) == pytest.approx(0.25, abs=1e-15)


def test_triangle_area():
    r = rule_for_geometry("triangle", 1)
    assert r.weights.sum() == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("k, expected", [(1, 3), (2, 5), (0, 2), (5, 11)])
def test_required_order(k, expected):
    assert required_order(k) == expected


def test_required_order_negative():
    with pytest.raises(ValueError):
        required_order(-1)


def test_unsupported_geometry():
    with pytest.raises(ValueError):
        rule_for_geometry("tetrahedron", 2)
    with pytest.raises(ValueError):
        rule_for_geometry("quadrilateral", -1)


def test_rules_are_read_only():
    r = rule_for_geometry("quadrilateral", 4)
    with pytest.raises(ValueError):
        r.weights[0] = 1.0


@pytest.mark.parametrize("geom", GEOMS)
@pytest.mark.parametrize("acc", range(0, 16))
def test_monomial_exactness(geom, acc):
    r = rule_for_geometry(geom, acc)
    assert np.all(r.weights > 0)
    assert r.weights.sum() == pytest.approx(MEASURE[geom], rel=1e-14)
    if geom == "segment":
        assert np.all(np.abs(r.points) <= 1)
        for a in range(acc + 1):
            got = r.weights @ r.points[:, 0] ** a
            assert abs(got - exact_monomial(geom, a)) <= 1e-13 * max(1.0, abs(exact_monomial(geom, a)))
        return
    assert inside_reference(geom, r.points)
    x, y = r.points[:, 0], r.points[:, 1]
    for a in range(acc + 1):
        for b in range(acc + 1 - a):
            exact = exact_monomial(geom, a, b)
            assert abs(r.weights @ (x**a * y**b) - exact) <= 1e-13 * exact


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["triangle", "quadrilateral"]),
    st.integers(0, 12),
    st.lists(st.floats(-5, 5), min_size=91, max_size=91),
)
def test_random_polynomials(geom, acc, coeffs):
    r = rule_for_geometry(geom, acc)
    x, y = r.points[:, 0], r.points[:, 1]
    terms = [(a, b) for a in range(acc + 1) for b in range(acc + 1 - a)]
    got = sum(c * (r.weights @ (x**a * y**b)) for c, (a, b) in zip(coeffs, terms))
    exact = sum(c * exact_monomial(geom, a, b) for c, (a, b) in zip(coeffs, terms))
    scale = sum(abs(c) * exact_monomial(geom, a, b) for c, (a, b) in zip(coeffs, terms))
    assert abs(got - exact) <= 1e-13 * max(scale, 1e-300)

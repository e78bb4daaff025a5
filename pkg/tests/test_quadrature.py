"""Reference rules, mapped rules, and composed cut-cell quadrature."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutmesh.errors import InvalidArgumentError
from cutmesh.quadrature import (
    DEFAULT_ORDER,
    build_rule,
    element_measure,
    integrate,
    map_rule,
)
from cutmesh.reference_elements import ElementFamily, reference_element

FAMILIES = list(ElementFamily)

MEASURE = {
    ElementFamily.LINE: 2.0,
    ElementFamily.TRIANGLE: 0.5,
    ElementFamily.QUAD: 4.0,
    ElementFamily.TETRA: 1.0 / 6.0,
    ElementFamily.PRISM: 1.0,
}


def monomial_integral(family, exponents):
    """Closed-form reference integrals of x^a y^b z^c per family."""
    if family is ElementFamily.LINE:
        (a,) = exponents
        return 0.0 if a % 2 else 2.0 / (a + 1)
    if family is ElementFamily.QUAD:
        return np.prod([0.0 if a % 2 else 2.0 / (a + 1) for a in exponents])
    if family is ElementFamily.TRIANGLE:
        from math import factorial
        a, b = exponents
        return factorial(a) * factorial(b) / factorial(a + b + 2)
    if family is ElementFamily.TETRA:
        from math import factorial
        a, b, c = exponents
        return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
    if family is ElementFamily.PRISM:
        a, b, c = exponents
        tri = monomial_integral(ElementFamily.TRIANGLE, (a, b))
        return tri * monomial_integral(ElementFamily.LINE, (c,))
    raise AssertionError(family)


def all_exponents(dim, degree):
    if dim == 1:
        return [(a,) for a in range(degree + 1)]
    out = []
    for a in range(degree + 1):
        for rest in all_exponents(dim - 1, degree - a):
            out.append((a,) + rest)
    return out


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("order", [1, 3, 5, 8])
def test_monomial_exactness(family, order):
    rule = build_rule(family, order)
    dim = rule.points.shape[1]
    for exps in all_exponents(dim, order):
        vals = np.prod(rule.points ** np.array(exps), axis=1)
        got = rule.weights @ vals
        ref = monomial_integral(family, exps)
        assert abs(got - ref) <= 1e-13 * max(1.0, abs(ref)), (exps, got, ref)


@pytest.mark.parametrize("family", FAMILIES)
def test_weights_positive_and_sum_to_measure(family):
    for order in (1, 5, DEFAULT_ORDER):
        rule = build_rule(family, order)
        assert np.all(rule.weights > 0)
        assert np.isclose(rule.weights.sum(), MEASURE[family], rtol=1e-13)


def test_order_bounds():
    with pytest.raises(InvalidArgumentError):
        build_rule(ElementFamily.LINE, -1)
    with pytest.raises(InvalidArgumentError):
        build_rule(ElementFamily.LINE, 61)


def test_mapped_affine_triangle_area():
    corners = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    rule = build_rule(ElementFamily.TRIANGLE, 4)
    mapped = map_rule(rule, ElementFamily.TRIANGLE, 1, corners)
    assert np.isclose(mapped.weights.sum(), 1.0, rtol=1e-14)
    assert np.isclose(integrate(mapped, fn=lambda x: x[:, 0]), 2.0 / 3.0)


def test_mapped_surface_rule_arc_length():
    # quadratic line element bent into a parabola arc y = x^2, x in [-1, 1]
    nodes = np.array([[-1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    rule = build_rule(ElementFamily.LINE, 30)
    mapped = map_rule(rule, ElementFamily.LINE, 2, nodes, surface=True)
    exact = np.sqrt(5.0) + np.arcsinh(2.0) / 2.0  # int sqrt(1+4x^2)
    assert np.isclose(mapped.weights.sum(), exact, rtol=1e-12)


def test_integrate_values_equivalent_to_fn():
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    rule = build_rule(ElementFamily.TRIANGLE, 3)
    mapped = map_rule(rule, ElementFamily.TRIANGLE, 1, corners)
    fn = lambda x: 1.0 + x[:, 0] + 2.0 * x[:, 1]
    by_fn = integrate(mapped, fn=fn)
    by_vals = integrate(mapped, values=fn(mapped.points))
    assert np.isclose(by_fn, by_vals, rtol=1e-15)
    assert np.isclose(integrate(mapped), mapped.weights.sum(), rtol=1e-15)


def test_element_measure_matches_jacobian():
    # curved quadratic triangle: straight edges except one bulged midpoint
    elem = reference_element(ElementFamily.TRIANGLE, 2)
    nodes = elem.nodes.copy()
    nodes[3] += [0.05, 0.1]  # push an edge midpoint outward
    area = element_measure(ElementFamily.TRIANGLE, 2, nodes)
    rule = build_rule(ElementFamily.TRIANGLE, 20)
    mapped = map_rule(rule, ElementFamily.TRIANGLE, 2, nodes)
    assert np.isclose(area, mapped.weights.sum(), rtol=1e-13)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_random_affine_simplex_volumes(seed):
    rng = np.random.default_rng(seed)
    for family, dim in ((ElementFamily.TRIANGLE, 2), (ElementFamily.TETRA, 3)):
        corners = rng.uniform(-1, 1, size=(dim + 1, dim))
        det = np.linalg.det(corners[1:] - corners[0])
        if abs(det) < 1e-3:
            continue
        if det < 0:  # orient positively
            corners[[1, 2]] = corners[[2, 1]]
            det = -det
        rule = build_rule(family, 2)
        mapped = map_rule(rule, family, 1, corners)
        ref = det / (2.0 if dim == 2 else 6.0)
        assert np.isclose(mapped.weights.sum(), ref, rtol=1e-12)

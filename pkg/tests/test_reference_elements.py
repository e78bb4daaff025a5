"""Shape functions, node lattices, and sample grids on the reference families."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutmesh.errors import InvalidArgumentError
from cutmesh.reference_elements import (
    ElementFamily,
    MAX_ORDER,
    default_sample_density,
    reference_element,
    sample_grid,
)

FAMILIES = list(ElementFamily)

N_NODES = {
    ElementFamily.LINE: lambda p: p + 1,
    ElementFamily.TRIANGLE: lambda p: (p + 1) * (p + 2) // 2,
    ElementFamily.QUAD: lambda p: (p + 1) ** 2,
    ElementFamily.TETRA: lambda p: (p + 1) * (p + 2) * (p + 3) // 6,
    ElementFamily.PRISM: lambda p: (p + 1) ** 2 * (p + 2) // 2,
}


def interior_points(elem, m, rng):
    """Random strictly interior points via corner convex combinations."""
    w = rng.dirichlet(np.ones(elem.n_corners), size=m)
    return w @ elem.corners


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_node_counts_and_corner_block(family, order):
    elem = reference_element(family, order)
    assert elem.n_nodes == N_NODES[family](order)
    assert elem.nodes.shape == (elem.n_nodes, elem.dim)
    assert np.array_equal(elem.corners, elem.nodes[: elem.n_corners])


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("order", [1, 2, 3, 5])
def test_kronecker_property(family, order):
    elem = reference_element(family, order)
    vals = elem.shape_functions(elem.nodes)
    assert np.allclose(vals, np.eye(elem.n_nodes), atol=1e-11)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_partition_of_unity(family, order):
    elem = reference_element(family, order)
    pts = interior_points(elem, 40, np.random.default_rng(7))
    vals = elem.shape_functions(pts)
    assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-12)
    grads = elem.shape_gradients(pts)
    assert np.allclose(grads.sum(axis=1), 0.0, atol=1e-10)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("order", [2, 4])
def test_gradients_match_finite_differences(family, order):
    elem = reference_element(family, order)
    rng = np.random.default_rng(3)
    pts = 0.9 * interior_points(elem, 10, rng) + 0.1 * elem.corners.mean(axis=0)
    grads = elem.shape_gradients(pts)
    eps = 1e-6
    for d in range(elem.dim):
        shift = np.zeros(elem.dim)
        shift[d] = eps
        fd = (elem.shape_functions(pts + shift) - elem.shape_functions(pts - shift)) / (2 * eps)
        assert np.allclose(grads[:, :, d], fd, atol=1e-7)


@pytest.mark.parametrize("family", FAMILIES)
def test_polynomial_reproduction(family):
    # degree-p polynomials interpolate exactly on an order-p lattice
    rng = np.random.default_rng(11)
    for p in (1, 2, 3):
        elem = reference_element(family, p)

        def poly(x):
            out = np.ones(x.shape[0])
            for d in range(x.shape[1]):
                out = out + (d + 1.0) * x[:, d] ** min(p, 2) + 0.3 * x[:, d]
            return out

        vals = poly(elem.nodes)
        pts = interior_points(elem, 25, rng)
        assert np.allclose(elem.shape_functions(pts) @ vals, poly(pts), atol=1e-10)


def test_edge_node_indices_run_corner_to_corner():
    for family in (ElementFamily.LINE, ElementFamily.TRIANGLE, ElementFamily.QUAD):
        for p in (1, 3):
            elem = reference_element(family, p)
            for e, (ca, cb) in enumerate(elem.edges):
                idx = elem.edge_node_indices(e)
                assert idx[0] == ca and idx[-1] == cb
                assert len(idx) == p + 1
                chord = elem.nodes[idx]
                t = np.linspace(0, 1, p + 1)[:, None]
                expect = (1 - t) * elem.nodes[ca] + t * elem.nodes[cb]
                assert np.allclose(chord, expect, atol=1e-12)


def test_order_bounds_rejected():
    with pytest.raises(InvalidArgumentError):
        reference_element(ElementFamily.TRIANGLE, 0)
    with pytest.raises(InvalidArgumentError):
        reference_element(ElementFamily.TRIANGLE, MAX_ORDER + 1)


def test_default_sample_density():
    for p in range(1, MAX_ORDER + 1):
        assert default_sample_density(p) == 2 * p + 1


@pytest.mark.parametrize("family", FAMILIES)
def test_sample_grid_contains_nodes_and_orders_edges(family):
    p, density = 2, 5
    elem = reference_element(family, p)
    grid = sample_grid(family, p, density)
    # every element node appears in the grid
    for node in elem.nodes:
        dists = np.linalg.norm(grid.points - node, axis=1)
        assert dists.min() < 1e-12
    # edge point chains run corner to corner with density+1 or more points
    for e, (ca, cb) in enumerate(elem.edges):
        chain = grid.points[list(grid.edge_indices[e])]
        assert len(chain) >= density + 1
        assert np.allclose(chain[0], elem.corners[ca], atol=1e-12)
        assert np.allclose(chain[-1], elem.corners[cb], atol=1e-12)
        steps = np.diff(chain, axis=0)
        direction = elem.corners[cb] - elem.corners[ca]
        assert np.all(steps @ direction > 0)


def test_sample_grid_density_floor():
    with pytest.raises(InvalidArgumentError):
        sample_grid(ElementFamily.TRIANGLE, 3, 3)


@settings(max_examples=25, deadline=None)
@given(
    family=st.sampled_from(FAMILIES),
    order=st.integers(1, 4),
    seed=st.integers(0, 2**31 - 1),
)
def test_interpolation_bounded_by_node_values(family, order, seed):
    # linear shape functions are a convex combination only for simplices,
    # but partition of unity bounds the interpolant of constants everywhere
    elem = reference_element(family, order)
    rng = np.random.default_rng(seed)
    c = rng.normal()
    vals = np.full(elem.n_nodes, c)
    pts = interior_points(elem, 8, rng)
    assert np.allclose(elem.shape_functions(pts) @ vals, c, atol=1e-11)

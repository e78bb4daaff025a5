"""Boundary reproduction and interior consistency of the transfinite maps."""

import numpy as np
import pytest

from cutmesh.errors import InvalidArgumentError
from cutmesh.reference_elements import ElementFamily, reference_element
from cutmesh.transfinite_maps import (
    curve_eval,
    lattice_nodes,
    map_prism_quad_face,
    map_prism_tri_face,
    map_quad_from_edges,
    map_tetra_one_curved_edge,
    map_tetra_one_curved_face,
    map_tri_from_edges,
    straight_edge,
)


def wiggly_edge(order, first, last, amp, rng):
    """Edge curve from first to last with random transverse wiggles."""
    t = np.linspace(-1.0, 1.0, order + 1)
    base = np.outer((1 - t) / 2, first) + np.outer((1 + t) / 2, last)
    bump = rng.normal(scale=amp, size=base.shape)
    bump[0] = bump[-1] = 0.0
    return base + bump


def test_identity_edges_give_identity_tri_map():
    order = 3
    tri = reference_element(ElementFamily.TRIANGLE, order)
    corners = tri.corners
    edges = [straight_edge(order, corners[k], corners[(k + 1) % 3]) for k in range(3)]
    ev = map_tri_from_edges(order, edges)
    pts = np.array([[0.2, 0.3], [0.0, 0.0], [0.5, 0.5], [1 / 3, 1 / 3]])
    assert np.allclose(ev(pts), pts, atol=1e-13)


@pytest.mark.parametrize("order", [2, 3, 5])
def test_tri_map_reproduces_edges(order):
    rng = np.random.default_rng(order)
    corners = np.array([[0.0, 0.0], [1.1, 0.1], [0.2, 0.9]])
    edges = [wiggly_edge(order, corners[k], corners[(k + 1) % 3], 0.05, rng)
             for k in range(3)]
    ev = map_tri_from_edges(order, edges)
    t = np.linspace(-1, 1, 17)
    refs = [np.column_stack([(1 + t) / 2, np.zeros_like(t)]),      # edge 0
            np.column_stack([(1 - t) / 2, (1 + t) / 2]),           # edge 1
            np.column_stack([np.zeros_like(t), (1 - t) / 2])]      # edge 2
    for k in range(3):
        got = ev(refs[k])
        expect = curve_eval(order, edges[k], t)
        assert np.allclose(got, expect, atol=1e-12), k


@pytest.mark.parametrize("order", [2, 4])
def test_quad_map_reproduces_edges(order):
    rng = np.random.default_rng(10 + order)
    corners = np.array([[-1.0, -1.0], [1.0, -1.1], [1.2, 1.0], [-0.9, 1.1]])
    edges = [wiggly_edge(order, corners[k], corners[(k + 1) % 4], 0.06, rng)
             for k in range(4)]
    ev = map_quad_from_edges(order, edges)
    t = np.linspace(-1, 1, 13)
    one = np.ones_like(t)
    refs = [np.column_stack([t, -one]), np.column_stack([one, t]),
            np.column_stack([-t, one]), np.column_stack([-one, -t])]
    for k in range(4):
        assert np.allclose(ev(refs[k]), curve_eval(order, edges[k], t), atol=1e-12)


def test_contour_validation():
    order = 2
    a = straight_edge(order, [0, 0], [1, 0])
    b = straight_edge(order, [1, 0], [0, 1])
    c_bad = straight_edge(order, [0.1, 1], [0, 0])  # gap after edge b
    with pytest.raises(InvalidArgumentError):
        map_tri_from_edges(order, [a, b, c_bad])
    with pytest.raises(InvalidArgumentError):
        map_tri_from_edges(order, [a, b])


@pytest.mark.parametrize("edge", [(0, 1), (1, 2), (0, 3), (2, 3)])
def test_tetra_curved_edge_map(edge):
    order = 3
    rng = np.random.default_rng(edge[0] * 7 + edge[1])
    corners = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                        [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    nodes = wiggly_edge(order, corners[edge[0]], corners[edge[1]], 0.04, rng)
    ev = map_tetra_one_curved_edge(order, corners, edge, nodes)
    # curved edge reproduced
    t = np.linspace(-1, 1, 9)
    lam = np.zeros((9, 4))
    lam[:, edge[0]] = (1 - t) / 2
    lam[:, edge[1]] = (1 + t) / 2
    ref = lam[:, 1:]
    assert np.allclose(ev(ref), curve_eval(order, nodes, t), atol=1e-12)
    # all other edges stay straight
    for (i, j) in ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)):
        if (i, j) == tuple(sorted(edge)):
            continue
        lam = np.zeros((9, 4))
        lam[:, i] = (1 - t) / 2
        lam[:, j] = (1 + t) / 2
        expect = np.outer((1 - t) / 2, corners[i]) + np.outer((1 + t) / 2, corners[j])
        assert np.allclose(ev(lam[:, 1:]), expect, atol=1e-12)


def test_tetra_curved_face_reproduces_face_element():
    order = 3
    rng = np.random.default_rng(42)
    corners = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                        [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    tri = reference_element(ElementFamily.TRIANGLE, order)
    face_nodes = lattice_nodes(
        lambda uv: np.column_stack([uv[:, 0], uv[:, 1], np.zeros(len(uv))]),
        ElementFamily.TRIANGLE, order)
    face_nodes += rng.normal(scale=0.03, size=face_nodes.shape)
    face_nodes[:3] = corners[[1, 2, 3]]  # corners must match
    ev = map_tetra_one_curved_face(order, corners, face_nodes)
    uv = rng.dirichlet(np.ones(3), size=25)[:, 1:]
    # the face is the a+b+c=1 wall; its chart (u, v) has barycentric
    # (1-u-v, u, v) over tetra corners (1, 2, 3)
    pts3 = np.column_stack([1 - uv.sum(axis=1), uv])
    got = ev(pts3)
    expect = tri.shape_functions(uv) @ face_nodes
    assert np.allclose(got, expect, atol=1e-11)


def test_prism_tri_face_blend():
    order = 2
    rng = np.random.default_rng(3)
    face_nodes = lattice_nodes(
        lambda uv: np.column_stack([uv, np.zeros(len(uv))]),
        ElementFamily.TRIANGLE, order)
    face_nodes[3:] += rng.normal(scale=0.05, size=face_nodes[3:].shape)
    top = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.2], [0.0, 1.0, 0.9]])
    ev = map_prism_tri_face(order, face_nodes, top)
    tri = reference_element(ElementFamily.TRIANGLE, order)
    uv = rng.dirichlet(np.ones(3), size=10)[:, 1:]
    bottom_pts = np.column_stack([uv, -np.ones(len(uv))])
    assert np.allclose(ev(bottom_pts), tri.shape_functions(uv) @ face_nodes, atol=1e-12)
    top_pts = np.column_stack([uv, np.ones(len(uv))])
    lam = np.column_stack([1 - uv.sum(axis=1), uv])
    assert np.allclose(ev(top_pts), lam @ top, atol=1e-12)


def test_prism_quad_face_reproduces_quad():
    order = 2
    rng = np.random.default_rng(8)
    quad = reference_element(ElementFamily.QUAD, order)
    # quad spans triangle edge 1..2 extruded upward, axis along c
    def base(uv):
        u, v = uv[:, 0], uv[:, 1]
        x = (1 - u) / 2  # from corner 1 (u=-1) to corner 2 (u=1)
        return np.column_stack([1 - (1 + u) / 2, (1 + u) / 2, v])
    quad_nodes = lattice_nodes(base, ElementFamily.QUAD, order)
    bulge = rng.normal(scale=0.04, size=quad_nodes.shape)
    for k, key in enumerate(quad.lattice):
        if key[0][0] in (0, order) and key[1][0] in (0, order):
            bulge[k] = 0.0
    quad_nodes = quad_nodes + bulge
    axis_bottom = np.array([0.0, 0.0, -1.0])
    axis_top = np.array([0.0, 0.0, 1.0])
    ev = map_prism_quad_face(order, axis_bottom, axis_top, quad_nodes, quad_axis=1)
    # the curved face is the a+b=1 wall of the prism
    t = np.linspace(-1, 1, 7)
    U, V = np.meshgrid(t, t, indexing="ij")
    uv = np.column_stack([U.ravel(), V.ravel()])
    wall = np.column_stack([(1 - uv[:, 0]) / 2, (1 + uv[:, 0]) / 2, uv[:, 1]])
    got = ev(wall)
    expect = quad.shape_functions(uv) @ quad_nodes
    assert np.allclose(got, expect, atol=1e-11)


def test_lattice_nodes_roundtrip():
    order = 4
    tri = reference_element(ElementFamily.TRIANGLE, order)
    ev = lambda pts: pts @ np.array([[2.0, 0.3], [0.1, 1.5]]) + 7.0
    nodes = lattice_nodes(ev, ElementFamily.TRIANGLE, order)
    assert np.allclose(nodes, ev(tri.nodes), atol=1e-14)

"""Sub-element decomposition: measure partition, simplexify, multi-function."""

import numpy as np
import pytest

from cutmesh.decomposition import (
    SubElement,
    decompose_element,
    decompose_mesh,
    decompose_multi,
    jacobian_range,
    map_to_physical,
    simplexify,
)
from cutmesh.errors import RefinementExhaustedError
from cutmesh.levelset import circle, interpolate, plane, sample_to_mesh, sphere
from cutmesh.mesh import build_structured_mesh
from cutmesh.quadrature import build_rule, element_measure, integrate, map_rule
from cutmesh.reconstruction import ReconstructionConfig
from cutmesh.reference_elements import ElementFamily, reference_element
from cutmesh.transfinite_maps import (
    lattice_nodes,
    map_quad_from_edges,
    straight_edge,
)

TRI_AREA = 0.5
TET_VOLUME = 1.0 / 6.0


def _field_values(field, family, order, corners):
    elem = reference_element(family, order)
    bary = np.column_stack([1 - elem.nodes.sum(axis=1), elem.nodes])
    return field(bary @ corners)


def _total_measure(subs, quad_order=20):
    return sum(element_measure(s.family, s.order, s.nodes, quad_order) for s in subs)


def test_triangle_partition_and_residuals():
    field = circle(0.6)
    corners = np.array([[0.45, 0.05], [1.1, 0.1], [0.5, 0.8]])
    for p in (1, 2, 4):
        vals = _field_values(field, ElementFamily.TRIANGLE, p, corners)
        cut = decompose_element(ElementFamily.TRIANGLE, p, vals)
        assert cut.refined == 0 and len(cut.interfaces) == 1
        assert np.isclose(_total_measure(cut.volume), TRI_AREA, atol=1e-12)
        signs = {s.sign for s in cut.volume}
        assert signs == {-1, 1}
        tri = reference_element(ElementFamily.TRIANGLE, p)
        resid = interpolate(tri, vals, cut.interfaces[0].nodes)
        assert np.max(np.abs(resid)) <= 1e-12


def test_tetra_partition_both_topologies():
    field = sphere(0.7)
    # one corner inside (Top1) and two corners inside (Top2)
    cases = [
        np.array([[0.6, 0.0, 0.0], [1.2, 0.1, 0.0], [0.5, 0.9, 0.1], [0.7, 0.2, 0.9]]),
        np.array([[0.4, 0.0, 0.0], [0.0, 0.5, 0.1], [1.0, 0.6, 0.1], [0.5, 0.3, 0.9]]),
    ]
    for p in (1, 2, 3):
        for corners in cases:
            vals = _field_values(field, ElementFamily.TETRA, p, corners)
            cut = decompose_element(ElementFamily.TETRA, p, vals)
            assert np.isclose(_total_measure(cut.volume), TET_VOLUME, atol=1e-12)
            for sub in cut.volume:
                lo, _ = jacobian_range(sub.family, sub.order, sub.nodes, 2 * p + 1)
                assert lo > 0.0


def test_affine_quad_and_prism_simplexify():
    corners = np.array([[0.0, 0.0], [1.2, 0.1], [1.3, 1.1], [-0.1, 0.9]])
    q = reference_element(ElementFamily.QUAD, 3)
    # bilinear placement of the quad lattice
    u = (q.nodes + 1.0) / 2.0
    nodes = (
        np.outer((1 - u[:, 0]) * (1 - u[:, 1]), corners[0])
        + np.outer(u[:, 0] * (1 - u[:, 1]), corners[1])
        + np.outer(u[:, 0] * u[:, 1], corners[2])
        + np.outer((1 - u[:, 0]) * u[:, 1], corners[3])
    )
    sub = SubElement(ElementFamily.QUAD, 3, nodes, 1)
    pieces = simplexify(sub)
    assert len(pieces) == 2
    assert all(p.family is ElementFamily.TRIANGLE for p in pieces)
    assert np.isclose(
        _total_measure(pieces), element_measure(ElementFamily.QUAD, 3, nodes), atol=1e-12
    )

    pri = reference_element(ElementFamily.PRISM, 2)
    base = np.array([[0.0, 0.0], [1.0, 0.0], [0.3, 0.9]])
    bary = np.column_stack([1 - pri.nodes[:, :2].sum(axis=1), pri.nodes[:, :2]])
    xy = bary @ base
    znod = pri.nodes[:, 2][:, None] * 0.8
    pnodes = np.column_stack([xy, znod])
    sub = SubElement(ElementFamily.PRISM, 2, pnodes, -1)
    pieces = simplexify(sub)
    assert len(pieces) == 3
    assert all(p.family is ElementFamily.TETRA for p in pieces)
    # reference prism extrudes the triangle over z in [-1, 1]
    area = abs(np.linalg.det(base[1:] - base[0])) / 2
    assert np.isclose(_total_measure(pieces), area * 1.6, atol=1e-12)


def test_curved_quad_simplexify_preserves_measure():
    # quad with a curved fourth side: the triangle pair shares the region
    # boundary, so the measures must agree to quadrature precision
    order = 4
    t = np.linspace(0.0, 1.0, order + 1)
    c0 = np.array([0.0, 0.0])
    c1 = np.array([1.0, 0.0])
    c2 = np.array([1.1, 1.0])
    c3 = np.array([0.1, 1.0])
    curve = (1 - t)[:, None] * c3 + t[:, None] * c0
    curve[:, 0] += 0.08 * np.sin(np.pi * t)  # bow the c3 -> c0 side
    edges = [
        straight_edge(order, c0, c1),
        straight_edge(order, c1, c2),
        straight_edge(order, c2, c3),
        curve,
    ]
    ev = map_quad_from_edges(order, edges)
    nodes = lattice_nodes(ev, ElementFamily.QUAD, order)
    sub = SubElement(ElementFamily.QUAD, order, nodes, 1, curved="edge3")
    pieces = simplexify(sub)
    quad_area = element_measure(ElementFamily.QUAD, order, nodes, 30)
    assert np.isclose(_total_measure(pieces, 30), quad_area, atol=1e-12)


def test_refinement_heals_double_cut_edge():
    # parabolic valley crossing the bottom edge twice: invalid as a single
    # element, valid after one round of self-similar refinement
    p = 3
    tri = reference_element(ElementFamily.TRIANGLE, p)
    x, y = tri.nodes[:, 0], tri.nodes[:, 1]
    vals = (x - 0.5) ** 2 + y - 0.04
    cut = decompose_element(ElementFamily.TRIANGLE, p, vals)
    assert cut.refined >= 1
    assert np.isclose(_total_measure(cut.volume), TRI_AREA, atol=1e-12)
    # the healed interface stays on the interpolant zero set
    for ifc in cut.interfaces:
        resid = interpolate(tri, vals, ifc.nodes)
        assert np.max(np.abs(resid)) <= 1e-11


def test_interior_ball_refines_until_resolved():
    # closed level set strictly inside the element: only refinement can
    # expose it; the negative region the sub-elements carve out must match
    # the interpolant's own negative area (dense sign-sampling oracle)
    p = 2
    center = np.array([0.2929, 0.2929])
    tri = reference_element(ElementFamily.TRIANGLE, p)
    vals = np.linalg.norm(tri.nodes - center, axis=1) - 0.27
    cut = decompose_element(ElementFamily.TRIANGLE, p, vals)
    assert cut.refined >= 1 and len(cut.interfaces) >= 4
    assert np.isclose(_total_measure(cut.volume), TRI_AREA, atol=1e-12)
    for ifc in cut.interfaces:
        resid = interpolate(tri, vals, ifc.nodes)
        assert np.max(np.abs(resid)) <= 1e-11
    neg = sum(
        element_measure(s.family, s.order, s.nodes, 20)
        for s in cut.volume
        if s.sign < 0
    )
    m = 1500
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    keep = i + j < m
    pts = np.column_stack([(i[keep] + 1 / 3) / m, (j[keep] + 1 / 3) / m])
    frac = np.mean(interpolate(tri, vals, pts) < 0)
    assert abs(neg - frac * TRI_AREA) < 2e-3


def test_depth_limit_exhaustion_raises():
    p = 2
    tri = reference_element(ElementFamily.TRIANGLE, p)
    x, y = tri.nodes[:, 0], tri.nodes[:, 1]
    vals = (x - 0.5) ** 2 + y - 0.04
    cfg = ReconstructionConfig(depth_limit=0)
    with pytest.raises(RefinementExhaustedError):
        decompose_element(ElementFamily.TRIANGLE, p, vals, cfg)


def test_halfplane_quadrants_exact():
    # two axis-aligned half-planes on the unit square: the four region
    # measures are exactly one quarter each, independent of function order
    box = ((0.0, 1.0), (0.0, 1.0))
    mesh = build_structured_mesh(2, 5, 2, box)
    fields = [plane((0.5, 0.5), (1.0, 0.0)), plane((0.5, 0.5), (0.0, 1.0))]
    values = sample_to_mesh(fields, mesh)
    result = decompose_mesh(mesh, values)
    regions = {}
    for ent in result.elements:
        scale = abs(np.linalg.det(_affine_matrix(mesh, ent.element)))
        for sub in ent.volume:
            area = scale * element_measure(sub.family, sub.order, sub.nodes, 8)
            regions[sub.signs] = regions.get(sub.signs, 0.0) + area
    assert set(regions) == {(-1, -1), (-1, 1), (1, -1), (1, 1)}
    for key, area in regions.items():
        assert np.isclose(area, 0.25, atol=1e-12), (key, area)


def _affine_matrix(mesh, element_id):
    coords = mesh.element_nodes(element_id)
    corners = coords[: mesh.dim + 1]
    return (corners[1:] - corners[0]).T


def test_halfplane_processing_order_invariance():
    box = ((0.0, 1.0), (0.0, 1.0))
    mesh = build_structured_mesh(2, 3, 3, box)
    fields = [plane((0.5, 0.5), (1.0, 0.0)), plane((0.5, 0.5), (0.0, 1.0))]
    values = sample_to_mesh(fields, mesh)
    swapped = values[::-1].copy()

    def region_measures(vals, flip):
        result = decompose_mesh(mesh, vals)
        out = {}
        for ent in result.elements:
            scale = abs(np.linalg.det(_affine_matrix(mesh, ent.element)))
            for sub in ent.volume:
                key = sub.signs[::-1] if flip else sub.signs
                out[key] = out.get(key, 0.0) + scale * element_measure(
                    sub.family, sub.order, sub.nodes, 8
                )
        return out

    a = region_measures(values, False)
    b = region_measures(swapped, True)
    assert set(a) == set(b)
    for key in a:
        assert abs(a[key] - b[key]) <= 1e-12


def test_multi_single_element_circle_and_line():
    # reference triangle cut by a circle and a line: region measures sum
    # to the full area and every leaf has positive Jacobians
    p = 3
    tri = reference_element(ElementFamily.TRIANGLE, p)
    f1 = np.linalg.norm(tri.nodes - np.array([0.0, 0.0]), axis=1) - 0.55
    f2 = tri.nodes[:, 0] - tri.nodes[:, 1] - 0.1
    cut = decompose_multi(ElementFamily.TRIANGLE, p, [f1, f2])
    assert np.isclose(_total_measure(cut.volume), TRI_AREA, atol=1e-12)
    keys = {s.signs for s in cut.volume}
    assert len(keys) >= 3
    for sub in cut.volume:
        assert len(sub.signs) == 2
        lo, _ = jacobian_range(sub.family, sub.order, sub.nodes, 2 * p + 1)
        assert lo > 0.0


def test_multi_sphere_plane_volumes():
    # sphere split by an offset plane on a 3D mesh: cap volumes against
    # the closed-form spherical cap formula
    r = 0.7123
    plane_z = 0.2017
    mesh = build_structured_mesh(3, 6, 2)
    fields = [sphere(r), plane((0.0, 0.0, plane_z), (0.0, 0.0, 1.0))]
    values = sample_to_mesh(fields, mesh)
    result = decompose_mesh(mesh, values)
    regions = {}
    box_vol = 1.0
    for lo, hi in mesh.box:
        box_vol *= hi - lo
    for ent in result.elements:
        scale = abs(np.linalg.det(_affine_matrix(mesh, ent.element)))
        for sub in ent.volume:
            regions[sub.signs] = regions.get(sub.signs, 0.0) + scale * element_measure(
                sub.family, sub.order, sub.nodes, 10
            )
    total = sum(regions.values())
    assert np.isclose(total, box_vol, atol=1e-10)
    h_cap = r - plane_z
    cap = np.pi * h_cap**2 * (3 * r - h_cap) / 3.0
    ball = 4.0 / 3.0 * np.pi * r**3
    assert abs(regions[(-1, 1)] - cap) < 5e-5
    assert abs(regions[(-1, -1)] - (ball - cap)) < 5e-5


def test_mesh_decomposition_counts_and_signs():
    r = 0.7123
    mesh = build_structured_mesh(2, 12, 2)
    values = sample_to_mesh(circle(r), mesh)
    result = decompose_mesh(mesh, values)
    assert len(result.elements) == mesh.n_elements
    assert result.cut_elements > 0
    area = 0.0
    inside = 0.0
    for ent in result.elements:
        scale = abs(np.linalg.det(_affine_matrix(mesh, ent.element)))
        for sub in ent.volume:
            m = scale * element_measure(sub.family, sub.order, sub.nodes, 8)
            area += m
            if sub.sign < 0:
                inside += m
    box_area = 1.0
    for lo, hi in mesh.box:
        box_area *= hi - lo
    assert np.isclose(area, box_area, atol=1e-10)
    assert abs(inside - np.pi * r**2) < 5e-4

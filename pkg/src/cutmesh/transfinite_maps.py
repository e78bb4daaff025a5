"""Transfinite maps: sub-element geometry from curved edges and faces.

Each builder returns a vectorized evaluator ``points -> coords``.  The
maps are componentwise polynomials of degree at most the element order,
so evaluating them once at the target element's lattice yields an
isoparametric element reproducing the map exactly; everything
downstream works with lattice nodes only.

Curve node arrays are ordered monotonically from the first corner to
the second (parameter -1..+1).  Curved triangular faces use the
triangle element node ordering, curved quadrilateral faces the quad
element node ordering.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError
from .reference_elements import ElementFamily, reference_element

# Blending ramps have removable singularities at curve endpoints; when a
# linear endpoint factor falls below this, the whole term is set to its
# limit value zero.
RAMP_GUARD = 1e-10

_TRI_EDGES = ((0, 1), (1, 2), (2, 0))
_QUAD_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))


@lru_cache(maxsize=None)
def _line_orders(order):
    line = reference_element(ElementFamily.LINE, order)
    mono = np.argsort(line.nodes[:, 0])
    inv = np.argsort(mono)
    mono.setflags(write=False)
    inv.setflags(write=False)
    return mono, inv


def _line_shapes(order, t):
    line = reference_element(ElementFamily.LINE, order)
    return line.shape_functions(np.asarray(t, dtype=float)[:, None])


def straight_edge(order, first, last):
    """Equispaced nodes of a straight edge between two corners."""
    t = np.linspace(0.0, 1.0, order + 1)[:, None]
    return (1.0 - t) * np.asarray(first, dtype=float) + t * np.asarray(last, dtype=float)


def curve_eval(order, nodes, t):
    """Evaluate a curve from monotone-ordered nodes at parameters t."""
    _, inv = _line_orders(order)
    shapes = _line_shapes(order, t)
    return shapes @ np.asarray(nodes, dtype=float)[inv]


def curve_deviation(order, nodes, t):
    """Curve minus the straight chord between its endpoints."""
    t = np.asarray(t, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    vals = curve_eval(order, nodes, t)
    lin = np.outer((1.0 - t) / 2, nodes[0]) + np.outer((1.0 + t) / 2, nodes[-1])
    return vals - lin


def _curve_deviation_batch(order, nodes, t):
    # nodes: (m, p+1, d) monotone per point, t: (m,)
    _, inv = _line_orders(order)
    shapes = _line_shapes(order, t)
    vals = np.einsum("mk,mkd->md", shapes, nodes[:, inv, :])
    lin = (1.0 - t)[:, None] / 2 * nodes[:, 0] + (1.0 + t)[:, None] / 2 * nodes[:, -1]
    return vals - lin


def _guarded_ramp(num, n1, n2):
    """Ramp num / (n1*n2) with the removable 0/0 at endpoint factors
    replaced by its limit value zero."""
    mask = (np.abs(n1) < RAMP_GUARD) | (np.abs(n2) < RAMP_GUARD)
    den = np.where(mask, 1.0, n1 * n2)
    return np.where(mask, 0.0, num / den)


def _sym_edge_term(order, li, lj, nodes):
    """Curved-edge contribution with the symmetric parameter extension
    w = lj - li; used wherever edge terms must restrict consistently to
    shared faces (tetra and prism constructions)."""
    w = lj - li
    ramp = _guarded_ramp(li * lj, (1.0 - w) / 2, (1.0 + w) / 2)
    return ramp[:, None] * curve_deviation(order, nodes, w)


def _check_contour(edges, n):
    if len(edges) != n:
        raise InvalidArgumentError(f"expected {n} edges, got {len(edges)}")
    edges = [np.asarray(e, dtype=float) for e in edges]
    sizes = {e.shape[0] for e in edges}
    if len(sizes) != 1:
        raise InvalidArgumentError("edges must all have the same order")
    for k in range(n):
        gap = np.abs(edges[k][-1] - edges[(k + 1) % n][0]).max()
        if gap > 1e-12:
            raise InvalidArgumentError(
                f"edges do not form a closed contour (gap {gap:.2e} after edge {k})"
            )
    return edges


def map_tri_from_edges(order, edges):
    """Triangle spanned by three edge curves forming a closed contour.

    Edge k runs from corner k to corner (k+1)%3.  The edge parameters
    are extended into the interior along coordinate lines (u1 = 2a-1,
    u2 = b-a, u3 = 1-2b), and each edge's deviation from its chord is
    blended with a ramp that equals one on the edge and vanishes on the
    other two.
    """
    edges = _check_contour(edges, 3)
    corners = np.array([e[0] for e in edges])

    def ev(points):
        points = np.asarray(points, dtype=float)
        a, b = points[:, 0], points[:, 1]
        lam = np.stack([1.0 - a - b, a, b], axis=1)
        out = lam @ corners
        params = (2 * a - 1, b - a, 1 - 2 * b)
        factors = ((1 - a, a), ((1 - b + a) / 2, (1 + b - a) / 2), (b, 1 - b))
        for k in range(3):
            i, j = _TRI_EDGES[k]
            ramp = _guarded_ramp(lam[:, i] * lam[:, j], *factors[k])
            out = out + ramp[:, None] * curve_deviation(order, edges[k], params[k])
        return out

    return ev


def map_quad_from_edges(order, edges):
    """Quadrilateral spanned by four edge curves forming a closed
    contour; edge k runs from corner k to corner (k+1)%4 with the
    parameter extensions u = a, b, -a, -b and bilinear ramps."""
    edges = _check_contour(edges, 4)
    corners = np.array([e[0] for e in edges])

    def ev(points):
        points = np.asarray(points, dtype=float)
        a, b = points[:, 0], points[:, 1]
        shp = np.stack(
            [
                (1 - a) * (1 - b),
                (1 + a) * (1 - b),
                (1 + a) * (1 + b),
                (1 - a) * (1 + b),
            ],
            axis=1,
        ) / 4.0
        out = shp @ corners
        ramps = ((1 - b) / 2, (1 + a) / 2, (1 + b) / 2, (1 - a) / 2)
        params = (a, b, -a, -b)
        for k in range(4):
            out = out + ramps[k][:, None] * curve_deviation(order, edges[k], params[k])
        return out

    return ev


def map_tetra_one_curved_edge(order, corners, edge, edge_nodes):
    """Tetrahedron with straight faces except for one curved edge
    between the local corners ``edge``; nodes run monotonically i -> j."""
    corners = np.asarray(corners, dtype=float)
    edge_nodes = np.asarray(edge_nodes, dtype=float)
    i, j = edge

    def ev(points):
        points = np.asarray(points, dtype=float)
        a, b, c = points[:, 0], points[:, 1], points[:, 2]
        lam = np.stack([1.0 - a - b - c, a, b, c], axis=1)
        return lam @ corners + _sym_edge_term(order, lam[:, i], lam[:, j], edge_nodes)

    return ev


def map_tetra_one_curved_face(order, corners, face_nodes, face_corner_ids=(1, 2, 3)):
    """Tetrahedron with one curved face given by a full triangle element.

    ``face_corner_ids`` lists the tetra corners carrying the face, in
    the order of the face element's own corners; the remaining corner is
    the apex.  The restriction to that face reproduces the face element
    exactly (curved edges plus interior deformation); the other three
    faces keep whatever curvature the face's edges force on them and
    are otherwise flat, so edge curves lying in those face planes keep
    the side faces planar.
    """
    corners = np.asarray(corners, dtype=float)
    face_nodes = np.asarray(face_nodes, dtype=float)
    tri = reference_element(ElementFamily.TRIANGLE, order)
    ids = tuple(int(i) for i in face_corner_ids)
    apex = ({0, 1, 2, 3} - set(ids)).pop()
    if np.max(np.abs(face_nodes[:3] - corners[list(ids)])) > 1e-9:
        raise InvalidArgumentError("face corners do not match tetra corners")
    curves = [face_nodes[tri.edge_node_indices(e)] for e in range(3)]
    face_corners = face_nodes[:3]

    def _edge_sum(order_, lam3):
        out = 0.0
        for k, (i, j) in enumerate(_TRI_EDGES):
            out = out + _sym_edge_term(order_, lam3[:, i], lam3[:, j], curves[k])
        return out

    def ev(points):
        points = np.asarray(points, dtype=float)
        a, b, c = points[:, 0], points[:, 1], points[:, 2]
        lam = np.stack([1.0 - a - b - c, a, b, c], axis=1)
        out = lam @ corners
        mu0 = lam[:, apex]
        mu = lam[:, list(ids)]
        out = out + _edge_sum(order, mu)
        # face coordinates extended radially from the apex
        u = mu[:, 1] + mu0 / 3
        v = mu[:, 2] + mu0 / 3
        lam_f = np.stack([mu[:, 0] + mu0 / 3, u, v], axis=1)
        face_full = tri.shape_functions(np.stack([u, v], axis=1)) @ face_nodes
        face_tf = lam_f @ face_corners + _edge_sum(order, lam_f)
        num = mu[:, 0] * mu[:, 1] * mu[:, 2]
        mask = np.abs(lam_f) < RAMP_GUARD
        den = np.where(mask, 1.0, lam_f).prod(axis=1)
        scale = np.where(mask.any(axis=1), 0.0, num / den)
        return out + scale[:, None] * (face_full - face_tf)

    return ev


def map_prism_tri_face(order, face_nodes, top_corners):
    """Prism between a curved triangular face (at c = -1, full triangle
    element) and a straight triangle (at c = +1), blended linearly."""
    face_nodes = np.asarray(face_nodes, dtype=float)
    top_corners = np.asarray(top_corners, dtype=float)
    tri = reference_element(ElementFamily.TRIANGLE, order)

    def ev(points):
        points = np.asarray(points, dtype=float)
        ab, c = points[:, :2], points[:, 2]
        bottom = tri.shape_functions(ab) @ face_nodes
        lam = np.stack([1.0 - ab[:, 0] - ab[:, 1], ab[:, 0], ab[:, 1]], axis=1)
        top = lam @ top_corners
        return (1.0 - c)[:, None] / 2 * bottom + (1.0 + c)[:, None] / 2 * top

    return ev


@lru_cache(maxsize=None)
def quad_tensor_index(order):
    """Index array T with T[i, j] = quad element node at lattice (i, j)."""
    quad = reference_element(ElementFamily.QUAD, order)
    idx = np.empty((order + 1, order + 1), dtype=int)
    for n, key in enumerate(quad.lattice):
        idx[key[0][0], key[1][0]] = n
    idx.setflags(write=False)
    return idx


def map_prism_quad_face(order, axis_bottom, axis_top, quad_nodes, quad_axis=0):
    """Prism with one curved quadrilateral face (a full quad element)
    opposite a straight axis edge.

    The axis edge runs from ``axis_bottom`` (c = -1, triangle corner 0)
    to ``axis_top``.  ``quad_axis`` names the quad reference coordinate
    running along the axis direction.  Each slice at fixed c is a
    triangle whose single curved side is the quad restricted to that
    level, so the lateral face opposite the axis reproduces the quad
    element exactly and the two triangle caps carry the quad's end
    edges as their curved sides.
    """
    axis_bottom = np.asarray(axis_bottom, dtype=float)
    axis_top = np.asarray(axis_top, dtype=float)
    quad_nodes = np.asarray(quad_nodes, dtype=float)
    tensor = quad_nodes[quad_tensor_index(order)]  # (p+1, p+1, d), monotone
    if quad_axis == 1:
        tensor = tensor.transpose(1, 0, 2)
    elif quad_axis != 0:
        raise InvalidArgumentError(f"quad_axis must be 0 or 1, got {quad_axis}")
    mono, _ = _line_orders(order)

    def ev(points):
        points = np.asarray(points, dtype=float)
        a, b, c = points[:, 0], points[:, 1], points[:, 2]
        basis = _line_shapes(order, c)[:, mono]  # monotone axis basis
        rows = np.einsum("mi,ijd->mjd", basis, tensor)
        axis_pt = np.outer((1.0 - c) / 2, axis_bottom) + np.outer(
            (1.0 + c) / 2, axis_top
        )
        lam0 = 1.0 - a - b
        out = (
            lam0[:, None] * axis_pt
            + a[:, None] * rows[:, 0]
            + b[:, None] * rows[:, -1]
        )
        w = b - a
        ramp = _guarded_ramp(a * b, (1.0 - w) / 2, (1.0 + w) / 2)
        return out + ramp[:, None] * _curve_deviation_batch(order, rows, w)

    return ev


def lattice_nodes(ev, family, order):
    """Evaluate a map at the target element lattice, producing the node
    coordinates of the isoparametric sub-element that reproduces it."""
    return ev(reference_element(family, order).nodes)

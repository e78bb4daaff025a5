"""Decomposition of cut elements into conforming higher-order sub-elements.

A cut triangle splits into a curved-edge triangle at the lone-signed
corner and a curved-edge quad; a cut tetra splits into a curved-face
tetra plus a prism (3-1 corner split) or two prisms sharing the curved
quad (2-2 split).  Sub-element geometry comes from transfinite maps of
the reconstructed interface evaluated at the target lattice, with the
interface nodes written verbatim into the shared side, so flanking
sub-elements conform exactly.

``simplexify`` splits quads and prisms into simplices between passes of
the multi-level-set driver; sides carrying a curved quad face are split
nodally (the diagonal of a bi-degree-p face has degree 2p), everything
else splits exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    DecompositionError,
    DegenerateGradientError,
    RefinementExhaustedError,
    RootSearchError,
    ValidityError,
)
from .levelset import interpolate
from .reconstruction import (
    InterfaceElement,
    ReconstructionConfig,
    check_validity,
    child_reference_corners,
    classify_topology,
    n_children,
    reconstruct_2d,
    reconstruct_3d,
    restrict_values,
    sign_of,
)
from .reference_elements import (
    ElementFamily,
    reference_element,
    sample_grid,
)
from .transfinite_maps import (
    lattice_nodes,
    map_prism_quad_face,
    map_prism_tri_face,
    map_quad_from_edges,
    map_tetra_one_curved_edge,
    map_tetra_one_curved_face,
    map_tri_from_edges,
    quad_tensor_index,
    straight_edge,
)


@dataclass
class SubElement:
    """One piece of a decomposed element.

    ``nodes`` live in the reference coordinates of the element the
    decomposition started from.  ``sign`` is the side of the level set
    the piece lies on; ``signs`` accumulates one entry per level-set
    function in multi-function decompositions.  ``curved`` names the
    side carrying interface curvature, if any.
    """

    family: ElementFamily
    order: int
    nodes: np.ndarray
    sign: int = 0
    signs: tuple = ()
    lineage: tuple = ()
    curved: str = "none"


@lru_cache(maxsize=None)
def _grid_grads(family, order, density):
    grid = sample_grid(family, order, density)
    grads = reference_element(family, order).shape_gradients(grid.points)
    grads.setflags(write=False)
    return grads


def jacobian_range(family, order, nodes, density):
    """Min and max Jacobian determinant over the sample grid."""
    grads = _grid_grads(family, order, density)
    jac = np.einsum("mnd,nk->mkd", grads, nodes)
    dets = np.linalg.det(jac)
    return float(dets.min()), float(dets.max())


def _check_jacobian(sub, density):
    lo, _ = jacobian_range(sub.family, sub.order, sub.nodes, density)
    if lo <= 0.0:
        raise DecompositionError(
            f"non-positive Jacobian ({lo:.3e}) in a {sub.family.name.lower()} sub-element"
        )
    return sub


def _curve_monotone(interface):
    """Line-element interface nodes reordered first corner to second."""
    nodes = interface.nodes
    return np.concatenate([nodes[:1], nodes[2:], nodes[1:2]])


# -- single-cut decompositions ---------------------------------------------------


def decompose_triangle(elem, nodal_values, interface, topology, cfg=None):
    """Split a cut triangle into a curved-edge triangle at the lone
    corner and a curved-edge quad on the other side."""
    cfg = cfg or ReconstructionConfig()
    order = elem.order
    density = cfg.density_for(order)
    perm = topology.permutation
    c0, c1, c2 = (elem.nodes[perm[k]] for k in range(3))
    mono = _curve_monotone(interface)
    p1, p2 = mono[0], mono[-1]

    tri = reference_element(ElementFamily.TRIANGLE, order)
    ev = map_tri_from_edges(
        order, [straight_edge(order, c0, p1), mono, straight_edge(order, p2, c0)]
    )
    tri_nodes = lattice_nodes(ev, ElementFamily.TRIANGLE, order)
    tri_nodes[tri.edge_node_indices(1)] = mono

    quad = reference_element(ElementFamily.QUAD, order)
    ev = map_quad_from_edges(
        order,
        [
            straight_edge(order, p1, c1),
            straight_edge(order, c1, c2),
            straight_edge(order, c2, p2),
            mono[::-1],
        ],
    )
    quad_nodes = lattice_nodes(ev, ElementFamily.QUAD, order)
    quad_nodes[quad.edge_node_indices(3)] = mono[::-1]

    sign = topology.corner_signs[perm[0]]
    subs = [
        SubElement(ElementFamily.TRIANGLE, order, tri_nodes, sign, curved="edge1"),
        SubElement(ElementFamily.QUAD, order, quad_nodes, -sign, curved="edge3"),
    ]
    for sub in subs:
        _check_jacobian(sub, density)
    return subs


@lru_cache(maxsize=None)
def _prism_bottom_slots(order):
    """Prism node ids of the bottom face, in triangle element order."""
    prism = reference_element(ElementFamily.PRISM, order)
    tri = reference_element(ElementFamily.TRIANGLE, order)
    out = np.array(
        [prism.node_index[(key[0], (0,))] for key in tri.lattice], dtype=int
    )
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _prism_lateral_slots(order, axis):
    """Prism node ids of the lateral face opposite the axis edge, in
    quad element order for the given quad axis convention."""
    prism = reference_element(ElementFamily.PRISM, order)
    quad = reference_element(ElementFamily.QUAD, order)
    out = np.empty(quad.n_nodes, dtype=int)
    for q, key in enumerate(quad.lattice):
        s, t = key[0][0], key[1][0]
        if axis == 0:
            i, k = order - t, s
        else:
            i, k = order - s, t
        out[q] = prism.node_index[((i, order - i), (k,))]
    out.setflags(write=False)
    return out


def decompose_tetra(elem, nodal_values, interface, topology, cfg=None):
    """Split a cut tetra along the reconstructed interface.

    3-1 corner split: curved-face tetra at the lone corner plus a prism
    with the interface as its curved triangular face.  2-2 split: two
    prisms sharing the curved quad, one per corner pair, with the pair
    edge as the straight axis.
    """
    cfg = cfg or ReconstructionConfig()
    order = elem.order
    density = cfg.density_for(order)
    perm = topology.permutation

    if topology.case == "TetraTop1":
        n1 = perm[0]
        corners = np.vstack([elem.nodes[n1][None, :], interface.nodes[:3]])
        ev = map_tetra_one_curved_face(order, corners, interface.nodes)
        tet = reference_element(ElementFamily.TETRA, order)
        tet_nodes = lattice_nodes(ev, ElementFamily.TETRA, order)
        tet_nodes[tet.face_node_indices((1, 2, 3))] = interface.nodes

        top = elem.nodes[list(perm[1:])]
        ev = map_prism_tri_face(order, interface.nodes, top)
        prism_nodes = lattice_nodes(ev, ElementFamily.PRISM, order)
        prism_nodes[_prism_bottom_slots(order)] = interface.nodes

        sign = topology.corner_signs[n1]
        subs = [
            SubElement(ElementFamily.TETRA, order, tet_nodes, sign, curved="face0"),
            SubElement(
                ElementFamily.PRISM, order, prism_nodes, -sign, curved="bottom"
            ),
        ]
    else:
        m1, m2, m3, m4 = perm
        subs = []
        for axis, (lo, hi) in enumerate(((m1, m2), (m3, m4))):
            ev = map_prism_quad_face(
                order, elem.nodes[lo], elem.nodes[hi], interface.nodes, quad_axis=axis
            )
            nodes = lattice_nodes(ev, ElementFamily.PRISM, order)
            nodes[_prism_lateral_slots(order, axis)] = interface.nodes
            subs.append(
                SubElement(
                    ElementFamily.PRISM,
                    order,
                    nodes,
                    topology.corner_signs[lo],
                    curved=f"lateral{axis}",
                )
            )
    for sub in subs:
        _check_jacobian(sub, density)
    return subs


# -- simplexification ------------------------------------------------------------


@lru_cache(maxsize=None)
def _tri_from_quad_gather(order, which):
    """Quad node ids forming one nodal half-triangle of the quad lattice."""
    quad = reference_element(ElementFamily.QUAD, order)
    tri = reference_element(ElementFamily.TRIANGLE, order)
    tensor = quad_tensor_index(order)
    maps = {
        "low": lambda m, l: (m, l),
        "low_swapped": lambda m, l: (l, m),
        "high": lambda m, l: (order - l, m + l),
        "high_swapped": lambda m, l: (order - m, m + l),
    }
    fn = maps[which]
    out = np.array([tensor[fn(key[0][0], key[0][1])] for key in tri.lattice], dtype=int)
    out.setflags(write=False)
    return out


def _affine_simplex(family, order, corners, sign, lineage):
    elem = reference_element(family, order)
    bary = np.column_stack([1.0 - elem.nodes.sum(axis=1), elem.nodes])
    return SubElement(family, order, bary @ corners, sign, lineage=lineage)


def simplexify(sub, cfg=None):
    """Split a sub-element into simplices covering the same region.

    Triangles and tetrahedra pass through; quads split across the
    diagonal away from the curved side; prisms split into three
    tetrahedra.  Sides carrying a curved quad face are reproduced
    nodally by a pair of half-lattice triangle interpolants.
    """
    cfg = cfg or ReconstructionConfig()
    order = sub.order
    density = cfg.density_for(order)

    if sub.family in (ElementFamily.TRIANGLE, ElementFamily.TETRA):
        return [sub]

    if sub.family is ElementFamily.QUAD:
        quad = reference_element(ElementFamily.QUAD, order)
        if sub.curved not in ("none", "edge3"):
            raise DecompositionError(f"unsupported curved side {sub.curved!r}")
        q = sub.nodes
        curve = q[quad.edge_node_indices(3)]  # q4 -> q1
        tri = reference_element(ElementFamily.TRIANGLE, order)
        ev = map_tri_from_edges(
            order,
            [
                curve,
                straight_edge(order, q[0], q[1]),
                straight_edge(order, q[1], q[3]),
            ],
        )
        t1 = lattice_nodes(ev, ElementFamily.TRIANGLE, order)
        t1[tri.edge_node_indices(0)] = curve
        first = SubElement(
            ElementFamily.TRIANGLE, order, t1, sub.sign, sub.signs, sub.lineage, "edge0"
        )
        second = _affine_simplex(
            ElementFamily.TRIANGLE, order, q[[1, 2, 3]], sub.sign, sub.lineage
        )
        second.signs = sub.signs
        out = [first, second]

    elif sub.family is ElementFamily.PRISM and sub.curved in ("bottom", "none"):
        prism = reference_element(ElementFamily.PRISM, order)
        tri = reference_element(ElementFamily.TRIANGLE, order)
        tet = reference_element(ElementFamily.TETRA, order)
        bottom = sub.nodes[_prism_bottom_slots(order)]
        b0, b1, b2, t0, t1, t2 = sub.nodes[:6]

        ev = map_tetra_one_curved_face(
            order, np.array([b0, b1, b2, t0]), bottom, face_corner_ids=(0, 1, 2)
        )
        n1 = lattice_nodes(ev, ElementFamily.TETRA, order)
        n1[tet.face_node_indices((0, 1, 2))] = bottom

        curve = bottom[tri.edge_node_indices(1)]  # b1 -> b2
        ev = map_tetra_one_curved_edge(
            order, np.array([b1, b2, t0, t1]), (0, 1), curve
        )
        n2 = lattice_nodes(ev, ElementFamily.TETRA, order)
        n2[tet.edge_node_indices(0)] = curve

        third = _affine_simplex(
            ElementFamily.TETRA, order, np.array([b2, t0, t1, t2]), sub.sign, sub.lineage
        )
        third.signs = sub.signs
        out = [
            SubElement(ElementFamily.TETRA, order, n1, sub.sign, sub.signs, sub.lineage),
            SubElement(ElementFamily.TETRA, order, n2, sub.sign, sub.signs, sub.lineage),
            third,
        ]

    elif sub.family is ElementFamily.PRISM:
        axis = {"lateral0": 0, "lateral1": 1}.get(sub.curved)
        if axis is None:
            raise DecompositionError(f"unsupported curved side {sub.curved!r}")
        quad = reference_element(ElementFamily.QUAD, order)
        tet = reference_element(ElementFamily.TETRA, order)
        qn = sub.nodes[_prism_lateral_slots(order, axis)]
        b0, t0 = sub.nodes[0], sub.nodes[3]
        if axis == 0:
            # bottom corners (Q1, Q4), top (Q2, Q3)
            corners1 = np.array([b0, qn[0], qn[3], t0])
            curve = qn[quad.edge_node_indices(3)][::-1]  # Q1 -> Q4
            face_a = (np.array([qn[0], qn[1], qn[3], t0]), "low")
            face_b = (np.array([qn[1], qn[2], qn[3], t0]), "high")
        else:
            # bottom corners (Q1, Q2), top (Q4, Q3)
            corners1 = np.array([b0, qn[0], qn[1], t0])
            curve = qn[quad.edge_node_indices(0)]  # Q1 -> Q2
            face_a = (np.array([qn[0], qn[3], qn[1], t0]), "low_swapped")
            face_b = (np.array([qn[1], qn[3], qn[2], t0]), "high_swapped")
        ev = map_tetra_one_curved_edge(order, corners1, (1, 2), curve)
        n1 = lattice_nodes(ev, ElementFamily.TETRA, order)
        n1[tet.edge_node_indices(3)] = curve
        out = [SubElement(ElementFamily.TETRA, order, n1, sub.sign, sub.signs, sub.lineage)]
        for corners, which in (face_a, face_b):
            face_nodes = qn[_tri_from_quad_gather(order, which)]
            ev = map_tetra_one_curved_face(
                order, corners, face_nodes, face_corner_ids=(0, 1, 2)
            )
            nk = lattice_nodes(ev, ElementFamily.TETRA, order)
            nk[tet.face_node_indices((0, 1, 2))] = face_nodes
            out.append(
                SubElement(ElementFamily.TETRA, order, nk, sub.sign, sub.signs, sub.lineage)
            )
    else:
        raise DecompositionError(f"cannot simplexify a {sub.family}")

    for piece in out:
        _check_jacobian(piece, density)
    return out


# -- single level-set driver -----------------------------------------------------


@dataclass
class ElementCut:
    """Decomposition of one element: volume pieces covering it, the
    interface elements, and the number of refinement events."""

    volume: list
    interfaces: list
    refined: int = 0


_RETRYABLE = (ValidityError, RootSearchError, DegenerateGradientError, DecompositionError)


def _to_parent(points, corners):
    bary = np.column_stack([1.0 - points.sum(axis=1), points])
    return bary @ corners


def decompose_element(family, order, nodal_values, cfg=None, _depth=0, _lineage=()):
    """Full pipeline for one element: validity, classification,
    reconstruction and decomposition, with self-similar refinement on
    failure.  Output coordinates live in the element's own reference
    domain."""
    cfg = cfg or ReconstructionConfig()
    elem = reference_element(family, order)
    values = np.asarray(nodal_values, dtype=float)
    try:
        report = check_validity(elem, values, cfg.density_for(order))
        if not report.valid:
            raise ValidityError(report.reason)
        topology = classify_topology(elem, values)
        if topology.case == "Uncut":
            sign = int(sign_of(values[0]))
            sub = SubElement(
                family, order, elem.nodes.copy(), sign, lineage=_lineage
            )
            return ElementCut([sub], [])
        if family is ElementFamily.TRIANGLE:
            interface = reconstruct_2d(elem, values, cfg, topology)
            subs = decompose_triangle(elem, values, interface, topology, cfg)
        else:
            interface = reconstruct_3d(elem, values, cfg, topology)
            subs = decompose_tetra(elem, values, interface, topology, cfg)
        for sub in subs:
            sub.lineage = _lineage
        return ElementCut(subs, [interface])
    except _RETRYABLE as exc:
        if _depth >= cfg.depth_limit:
            raise RefinementExhaustedError(
                f"refinement limit {cfg.depth_limit} reached: {exc}",
                depth=_depth,
                lineage=_lineage,
            )
        volume, interfaces = [], []
        refined = 1
        for k in range(n_children(family)):
            child_values = restrict_values(family, order, values, k)
            cut = decompose_element(
                family, order, child_values, cfg, _depth + 1, _lineage + (k,)
            )
            corners = child_reference_corners(family, k)
            for sub in cut.volume:
                sub.nodes = _to_parent(sub.nodes, corners)
            for ifc in cut.interfaces:
                ifc.nodes = _to_parent(ifc.nodes, corners)
            volume.extend(cut.volume)
            interfaces.extend(cut.interfaces)
            refined += cut.refined
        return ElementCut(volume, interfaces, refined)


# -- multiple level sets ---------------------------------------------------------


def _lift(elem, carrier_nodes, points):
    return elem.shape_functions(points) @ carrier_nodes


def _split_line_interface(ifc, values_fn, cfg, depth=0):
    """Split a line interface element at the zero of a later level-set
    function; returns (pieces, refined_events)."""
    from .reconstruction import _edge_root  # internal 1D Newton

    order = ifc.order
    line = reference_element(ElementFamily.LINE, order)
    density = cfg.density_for(order)
    grid = sample_grid(ElementFamily.LINE, order, density)
    vals = values_fn(ifc.nodes)
    samples = line.shape_functions(grid.points) @ vals
    signs = sign_of(samples)
    order_on_edge = list(grid.edge_indices[0])
    s = signs[order_on_edge]
    changes = int(np.count_nonzero(s[1:] != s[:-1]))
    if changes == 0:
        ifc.signs = ifc.signs + (int(s[0]),)
        return [ifc], 0
    if changes > 1:
        if depth >= cfg.depth_limit:
            raise RefinementExhaustedError(
                "interface splitting exhausted refinement", depth=depth
            )
        pieces, refined = [], 1
        for lo, hi in ((-1.0, 0.0), (0.0, 1.0)):
            sub = _line_piece(ifc, lo, hi)
            got, r = _split_line_interface(sub, values_fn, cfg, depth + 1)
            pieces.extend(got)
            refined += r
        return pieces, refined
    mono = np.concatenate([vals[:1], vals[2:], vals[1:2]])
    root = _edge_root(order, mono, cfg)
    pieces = []
    for lo, hi in ((-1.0, root), (root, 1.0)):
        piece = _line_piece(ifc, lo, hi)
        center = np.array([[(lo + hi) / 2]])
        val = float(line.shape_functions(center) @ vals)
        piece.signs = ifc.signs + (int(sign_of(val)),)
        pieces.append(piece)
    return pieces, 0


def _line_piece(ifc, lo, hi):
    order = ifc.order
    line = reference_element(ElementFamily.LINE, order)
    t = np.linspace(-1.0, 1.0, order + 1)
    u = lo + (hi - lo) * (t + 1.0) / 2
    mono = line.shape_functions(u[:, None]) @ ifc.nodes
    nodes = np.concatenate([mono[:1], mono[-1:], mono[1:-1]])
    return InterfaceElement(ElementFamily.LINE, order, nodes, ifc.generation, ifc.signs)


def _split_surface_interface(ifc, values_fn, cfg):
    """Split a triangle or quad interface element along the zero curve
    of a later level-set function via the 2D pipeline in its reference
    coordinates; returns (pieces, refined_events)."""
    order = ifc.order
    refined = 0
    tris = []
    if ifc.family is ElementFamily.QUAD:
        quad = reference_element(ElementFamily.QUAD, order)
        tri = reference_element(ElementFamily.TRIANGLE, order)
        bary = np.column_stack([1.0 - tri.nodes.sum(axis=1), tri.nodes])
        for ids in ((0, 1, 2), (0, 2, 3)):
            ref_pts = bary @ quad.corners[list(ids)]
            nodes = _lift(quad, ifc.nodes, ref_pts)
            tris.append(
                InterfaceElement(
                    ElementFamily.TRIANGLE, order, nodes, ifc.generation, ifc.signs
                )
            )
    else:
        tris = [ifc]

    pieces = []
    tri = reference_element(ElementFamily.TRIANGLE, order)
    for t in tris:
        vals = values_fn(t.nodes)
        if (sign_of(vals) == sign_of(vals[0])).all():
            samples_sign = _uniform_sign(ElementFamily.TRIANGLE, order, vals, cfg)
            if samples_sign is not None:
                t.signs = t.signs + (samples_sign,)
                pieces.append(t)
                continue
        cut = decompose_element(ElementFamily.TRIANGLE, order, vals, cfg)
        refined += cut.refined
        for sub in cut.volume:
            for piece in simplexify(sub, cfg):
                nodes = _lift(tri, t.nodes, piece.nodes)
                pieces.append(
                    InterfaceElement(
                        ElementFamily.TRIANGLE,
                        order,
                        nodes,
                        t.generation,
                        t.signs + (piece.sign,),
                    )
                )
    return pieces, refined


def _uniform_sign(family, order, values, cfg):
    """Sign if the sampled interpolant is single-signed, else None."""
    from .reconstruction import _grid_shapes

    grid, shapes = _grid_shapes(family, order, cfg.density_for(order))
    signs = sign_of(shapes @ values)
    if (signs == signs[0]).all():
        return int(signs[0])
    return None


def decompose_multi(family, order, values_list, cfg=None, _depth=0, _lineage=()):
    """Successive decomposition by several level-set functions.

    Each pass decomposes the current volume leaves by the next function,
    after simplexifying the leaves it actually cuts; earlier-generation
    interface elements are split where the function crosses them.  Signs
    accumulate into per-leaf region vectors.  A failure in a later pass
    (typically a simplexification diagonal crossed by strong curvature)
    refines the whole element and reruns every pass on the children.
    """
    cfg = cfg or ReconstructionConfig()
    values_list = [np.asarray(v, dtype=float) for v in values_list]
    try:
        return _decompose_multi_once(family, order, values_list, cfg)
    except (RefinementExhaustedError,) + _RETRYABLE as exc:
        if _depth >= cfg.depth_limit:
            raise RefinementExhaustedError(
                f"refinement limit {cfg.depth_limit} reached: {exc}",
                depth=_depth,
                lineage=_lineage,
            )
        volume, interfaces = [], []
        refined = 1
        for k in range(n_children(family)):
            child_values = [restrict_values(family, order, v, k) for v in values_list]
            cut = decompose_multi(
                family, order, child_values, cfg, _depth + 1, _lineage + (k,)
            )
            corners = child_reference_corners(family, k)
            for sub in cut.volume:
                sub.nodes = _to_parent(sub.nodes, corners)
                sub.lineage = (k,) + sub.lineage
            for ifc in cut.interfaces:
                ifc.nodes = _to_parent(ifc.nodes, corners)
            volume.extend(cut.volume)
            interfaces.extend(cut.interfaces)
            refined += cut.refined
        return ElementCut(volume, interfaces, refined)


def _decompose_multi_once(family, order, values_list, cfg):
    elem = reference_element(family, order)

    root = SubElement(family, order, elem.nodes.copy(), 0, ())
    leaves = [root]
    interfaces = []
    refined = 0

    for j, vals_j in enumerate(values_list):

        def on_root(points, _v=vals_j):
            return interpolate(elem, _v, points)

        new_interfaces = []
        for ifc in interfaces:
            if ifc.family is ElementFamily.LINE:
                got, r = _split_line_interface(ifc, on_root, cfg)
            else:
                got, r = _split_surface_interface(ifc, on_root, cfg)
            new_interfaces.extend(got)
            refined += r
        interfaces = new_interfaces

        new_leaves = []
        for leaf in leaves:
            if leaf.family is family and np.array_equal(leaf.nodes, elem.nodes):
                leaf_vals = vals_j
            else:
                leaf_vals = on_root(leaf.nodes)
            uniform = _uniform_sign(leaf.family, leaf.order, leaf_vals, cfg)
            if uniform is not None:
                leaf.signs = leaf.signs + (uniform,)
                new_leaves.append(leaf)
                continue
            for piece in simplexify(leaf, cfg):
                piece_elem = reference_element(piece.family, piece.order)
                piece_vals = on_root(piece.nodes)
                cut = decompose_element(piece.family, piece.order, piece_vals, cfg)
                refined += cut.refined
                for sub in cut.volume:
                    # A lateral-quad prism tiles its tetra exactly only
                    # together with its sibling prism; split both into the
                    # shared-diagonal tets now so later passes never touch
                    # one side of the pair alone.
                    if sub.curved in ("lateral0", "lateral1"):
                        parts = simplexify(sub, cfg)
                    else:
                        parts = [sub]
                    for part in parts:
                        nodes = _lift(piece_elem, piece.nodes, part.nodes)
                        new_leaves.append(
                            SubElement(
                                part.family,
                                part.order,
                                nodes,
                                part.sign,
                                piece.signs + (part.sign,),
                                piece.lineage + part.lineage,
                                part.curved,
                            )
                        )
                for ifc in cut.interfaces:
                    nodes = _lift(piece_elem, piece.nodes, ifc.nodes)
                    new_interfaces_entry = InterfaceElement(
                        ifc.family, ifc.order, nodes, j, piece.signs + (0,)
                    )
                    interfaces.append(new_interfaces_entry)
        leaves = new_leaves

    return ElementCut(leaves, interfaces, refined)


# -- mesh driver -----------------------------------------------------------------


def _thread_count():
    """Element-loop worker count, capped by the CUTMESH_THREADS variable."""
    raw = os.environ.get("CUTMESH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class ElementDecomposition:
    element: int
    volume: list
    interfaces: list
    refined: int = 0


@dataclass
class DecompositionResult:
    mesh: object
    elements: list
    cut_elements: int = 0
    refined_elements: int = 0


def decompose_mesh(mesh, nodal_values, cfg=None):
    """Decompose every cut element of a background mesh.

    ``nodal_values`` holds one row per level-set function (a single
    vector is promoted).  Uncut elements become single whole-element
    entries tagged with their sign vector.
    """
    cfg = cfg or ReconstructionConfig()
    values = np.atleast_2d(np.asarray(nodal_values, dtype=float))
    n_sets = values.shape[0]
    elem = reference_element(mesh.family, mesh.order)

    elem_vals = values[:, mesh.elements]  # (k, E, n)
    signs = sign_of(elem_vals)
    mixed = (signs != signs[:, :, :1]).any(axis=(0, 2))

    def process(e):
        vals_e = elem_vals[:, e, :]
        if not mixed[e]:
            uniform = [_uniform_sign(mesh.family, mesh.order, v, cfg) for v in vals_e]
            if all(u is not None for u in uniform):
                sub = SubElement(
                    mesh.family,
                    mesh.order,
                    elem.nodes.copy(),
                    uniform[0],
                    tuple(uniform),
                )
                return ElementDecomposition(e, [sub], [])
        if n_sets == 1:
            cut = decompose_element(mesh.family, mesh.order, vals_e[0], cfg)
            for sub in cut.volume:
                sub.signs = (sub.sign,)
        else:
            cut = decompose_multi(mesh.family, mesh.order, list(vals_e), cfg)
        return ElementDecomposition(e, cut.volume, cut.interfaces, cut.refined)

    threads = _thread_count()
    if threads > 1 and mesh.n_elements > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(process, range(mesh.n_elements)))
    else:
        entries = [process(e) for e in range(mesh.n_elements)]

    cut_count = sum(1 for ent in entries if ent.interfaces or ent.refined)
    refined_count = sum(1 for ent in entries if ent.refined)
    return DecompositionResult(mesh, entries, cut_count, refined_count)


def map_to_physical(mesh, element_id, points):
    """Reference coordinates of one background element to physical."""
    coords = mesh.element_nodes(element_id)
    if mesh.affine:
        corners = coords[: mesh.dim + 1]
        bary = np.column_stack([1.0 - points.sum(axis=1), points])
        return bary @ corners
    elem = reference_element(mesh.family, mesh.order)
    return elem.shape_functions(points) @ coords

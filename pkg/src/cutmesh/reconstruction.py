"""Explicit meshing of the zero set of a nodal level-set interpolant.

Cut reference elements are classified by corner signs, the cut points on
the edges are located by 1D Newton searches, and the remaining interface
nodes by damped Newton searches along per-node direction fields chosen
by a search variant.  The result is a higher-order interface element
(line, triangle or quad) whose nodes satisfy ``|phi^h| <= newton_tol``.

Elements on which the sampled sign pattern is inconsistent with a single
clean cut, or on which a search fails, are refined self-similarly; the
nodal data of the children is the exact restriction of the parent
interpolant.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import (
    CutmeshError,
    DegenerateGradientError,
    InvalidArgumentError,
    RootSearchError,
    ValidityError,
)
from .reference_elements import (
    ElementFamily,
    default_sample_density,
    reference_element,
    sample_grid,
)
from .transfinite_maps import map_quad_from_edges, map_tri_from_edges

# Nodal values within this of zero are treated as positive for sign
# decisions; sampling-side counterpart of the corner perturbation.
TIE_TOL = 1e-13

# Tetra faces, outward oriented, face k opposite corner k.
_TETRA_FACES = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))

# Relabelings pulling the lone-signed tetra corner to slot 0; all even.
_TOP1_PERMS = {
    0: (0, 1, 2, 3),
    1: (1, 0, 3, 2),
    2: (2, 0, 1, 3),
    3: (3, 0, 2, 1),
}


def sign_of(values):
    """Sign pattern used everywhere: below -TIE_TOL negative, else +1."""
    return np.where(np.asarray(values) < -TIE_TOL, -1, 1)


def _parity(perm):
    perm = list(perm)
    swaps = 0
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            swaps += 1
    return swaps % 2


# -- search variants -----------------------------------------------------------

_VARIANT_RE = re.compile(r"^([ABC])?([12])([1234])([ab])?$")


@dataclass(frozen=True)
class SearchVariant:
    """Search configuration code, e.g. ``13``, ``24b`` or ``A13``.

    First digit: intermediate curve (1 linear, 2 cubic Hermite).  Second
    digit: search direction (1 toward the lone corner, 2 interpolated
    cut-edge directions, 3 normal to the intermediate, 4 level-set
    gradient).  Suffix a/b for digit 4: gradient frozen at the start
    point vs re-evaluated each iteration.  Optional leading letter picks
    the direction for inner surface nodes in 3D: A normal of the
    transfinite start surface, B frozen gradient, C live gradient.
    """

    intermediate: int = 1
    direction: int = 3
    gradient_live: bool = False
    inner: str = "A"

    @staticmethod
    def parse(code):
        m = _VARIANT_RE.match(str(code).strip())
        if not m:
            raise InvalidArgumentError(f"unknown search variant code {code!r}")
        letter, d1, d2, suffix = m.groups()
        if suffix is not None and d2 != "4":
            raise InvalidArgumentError(
                f"variant suffix a/b only applies to direction 4, got {code!r}"
            )
        return SearchVariant(
            intermediate=int(d1),
            direction=int(d2),
            gradient_live=(suffix == "b"),
            inner=letter or "A",
        )

    @property
    def code(self):
        suffix = ("b" if self.gradient_live else "a") if self.direction == 4 else ""
        return f"{self.inner}{self.intermediate}{self.direction}{suffix}"


@dataclass(frozen=True)
class ReconstructionConfig:
    variant: SearchVariant = field(default_factory=SearchVariant)
    newton_tol: float = 1e-12
    max_iterations: int = 30
    domain_tol: float = 1e-8
    degenerate_tol: float = 1e-12
    sample_density: int = 0  # 0: 2*order+1
    depth_limit: int = 5

    def density_for(self, order):
        return self.sample_density or default_sample_density(order)


# -- validity ------------------------------------------------------------------


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    reason: str  # Clean | MultiplyCutEdge | WrongCutCount | InteriorClosedLevelSet
    uncut: bool
    edge_cut_counts: tuple
    cut_faces: tuple = ()


@lru_cache(maxsize=None)
def _grid_shapes(family, order, density):
    grid = sample_grid(family, order, density)
    shapes = reference_element(family, order).shape_functions(grid.points)
    shapes.setflags(write=False)
    return grid, shapes


@lru_cache(maxsize=None)
def _tetra_face_edges():
    edge_id = {e: k for k, e in enumerate(reference_element(ElementFamily.TETRA, 1).edges)}
    out = []
    for face in _TETRA_FACES:
        ids = []
        for i in range(3):
            a, b = face[i], face[(i + 1) % 3]
            ids.append(edge_id[(min(a, b), max(a, b))])
        out.append(tuple(ids))
    return tuple(out)


def check_validity(elem, nodal_values, density=0):
    """Decide whether the sampled sign pattern admits a single clean cut.

    Per triangle (each tetra face is treated as one): every edge changes
    sign at most once, the number of cut edges is 0 or 2, and a triangle
    without cut edges must be single-signed.  A tetra with no cut face
    must additionally be single-signed in the volume.
    """
    density = density or default_sample_density(elem.order)
    grid, shapes = _grid_shapes(elem.family, elem.order, density)
    samples = shapes @ np.asarray(nodal_values, dtype=float)
    signs = sign_of(samples)

    counts = []
    for idx in grid.edge_indices:
        s = signs[list(idx)]
        counts.append(int(np.count_nonzero(s[1:] != s[:-1])))
    counts = tuple(counts)

    def report(valid, reason, uncut, faces=()):
        return ValidityReport(valid, reason, uncut, counts, faces)

    if any(c > 1 for c in counts):
        return report(False, "MultiplyCutEdge", False)

    if elem.family is ElementFamily.TRIANGLE:
        n_cut = sum(1 for c in counts if c)
        if n_cut == 0:
            if (signs != signs[0]).any():
                return report(False, "InteriorClosedLevelSet", False)
            return report(True, "Clean", True)
        if n_cut != 2:
            return report(False, "WrongCutCount", False)
        return report(True, "Clean", False)

    if elem.family is ElementFamily.TETRA:
        cut_faces = []
        for face_ids, fgrid in zip(_tetra_face_edges(), grid.face_grids):
            n_cut = sum(1 for e in face_ids if counts[e])
            if n_cut not in (0, 2):
                return report(False, "WrongCutCount", False, tuple(cut_faces))
            if n_cut == 0:
                fs = signs[fgrid.volume_indices]
                if (fs != fs[0]).any():
                    return report(
                        False, "InteriorClosedLevelSet", False, tuple(cut_faces)
                    )
            cut_faces.append(n_cut > 0)
        cut_faces = tuple(cut_faces)
        if not any(cut_faces):
            if (signs != signs[0]).any():
                return report(False, "InteriorClosedLevelSet", False, cut_faces)
            return report(True, "Clean", True, cut_faces)
        return report(True, "Clean", False, cut_faces)

    raise InvalidArgumentError(f"validity check not defined for {elem.family}")


# -- topology ------------------------------------------------------------------


@dataclass(frozen=True)
class CutTopology:
    """Corner-sign classification of a cut simplex.

    ``permutation[i]`` is the original corner sitting at canonical slot
    i; ``cut_edges`` lists the cut edges as oriented original-corner
    pairs in canonical order (the order interface corners are assigned).
    """

    case: str  # Uncut | Triangle | TetraTop1 | TetraTop2
    corner_signs: tuple
    permutation: tuple
    cut_edges: tuple


def classify_topology(elem, nodal_values):
    signs = tuple(int(s) for s in sign_of(np.asarray(nodal_values)[: elem.n_corners]))
    if len(set(signs)) == 1:
        return CutTopology("Uncut", signs, tuple(range(len(signs))), ())

    if elem.family is ElementFamily.TRIANGLE:
        minority = 1 if signs.count(1) == 1 else -1
        lone = signs.index(minority)
        perm = (lone, (lone + 1) % 3, (lone + 2) % 3)
        cuts = ((perm[0], perm[1]), (perm[2], perm[0]))
        return CutTopology("Triangle", signs, perm, cuts)

    if elem.family is ElementFamily.TETRA:
        neg = [i for i, s in enumerate(signs) if s < 0]
        if len(neg) in (1, 3):
            lone = neg[0] if len(neg) == 1 else [i for i in range(4) if i not in neg][0]
            perm = _TOP1_PERMS[lone]
            n1 = perm[0]
            cuts = ((n1, perm[1]), (n1, perm[2]), (n1, perm[3]))
            return CutTopology("TetraTop1", signs, perm, cuts)
        pair1 = sorted(i for i in range(4) if signs[i] == signs[0])
        pair2 = sorted(i for i in range(4) if signs[i] != signs[0])
        m1, m2 = pair1
        m3, m4 = pair2
        if _parity((m1, m2, m3, m4)):
            m3, m4 = m4, m3
        cuts = ((m1, m3), (m2, m3), (m2, m4), (m1, m4))
        return CutTopology("TetraTop2", signs, (m1, m2, m3, m4), cuts)

    raise InvalidArgumentError(f"topology not defined for {elem.family}")


# -- edge roots ----------------------------------------------------------------


@lru_cache(maxsize=None)
def _edge_lookup(family):
    return {e: k for k, e in enumerate(reference_element(family, 1).edges)}


def _edge_root(order, values_mono, cfg):
    """Root of the 1D interpolant of monotone-ordered edge values.

    Newton steps are safeguarded by the sign-change bracket [-1, 1]: a step
    that leaves the current bracket, or lands where the derivative is too
    small to trust, falls back to bisection.  Near-tangential crossings
    (shallow double-root dips) therefore converge instead of oscillating.
    """
    vm = np.asarray(values_mono, dtype=float)
    line = reference_element(ElementFamily.LINE, order)
    ve = np.concatenate([[vm[0], vm[-1]], vm[1:-1]])
    va, vb = vm[0], vm[-1]

    def evaluate(u):
        pt = np.array([[u]])
        phi = float((line.shape_functions(pt) @ ve)[0])
        dphi = float(line.shape_gradients(pt)[0, :, 0] @ ve)
        return phi, dphi

    lo, hi, flo = -1.0, 1.0, va
    u = 2.0 * va / (va - vb) - 1.0
    target = 0.01 * cfg.newton_tol
    best_u, best_res = u, np.inf
    for _ in range(2 * cfg.max_iterations):
        phi, dphi = evaluate(u)
        res = abs(phi)
        if res < best_res:
            best_u, best_res = u, res
        if res <= target or hi - lo < 1e-16:
            break
        if phi * flo > 0.0:
            lo = u
        else:
            hi = u
        step_ok = abs(dphi) >= cfg.degenerate_tol
        if step_ok:
            trial = u - phi / dphi
            step_ok = lo < trial < hi
        u = trial if step_ok else 0.5 * (lo + hi)
    u = best_u
    if abs(u) - 1.0 > cfg.domain_tol:
        raise RootSearchError(f"edge root left the edge (u={u:.6f})")
    if abs(u) > 1.0:
        u = float(np.clip(u, -1.0, 1.0))
        best_res = abs(float((line.shape_functions(np.array([[u]])) @ ve)[0]))
    if best_res > cfg.newton_tol:
        raise RootSearchError(
            f"edge search stalled at residual {best_res:.3e}"
        )
    return u


def find_edge_intersections(elem, nodal_values, topology, cfg, fixed=None):
    """Roots on the cut edges, keyed by sorted corner pair.

    The parameter runs from the lower- to the higher-numbered corner, so
    both elements sharing an edge agree on the value.  ``fixed`` entries
    are adopted verbatim (used to share tetra edge roots across faces).
    """
    values = np.asarray(nodal_values, dtype=float)
    lookup = _edge_lookup(elem.family)
    roots = {}
    for a, b in topology.cut_edges:
        key = (min(a, b), max(a, b))
        if key in roots:
            continue
        if fixed and key in fixed:
            roots[key] = fixed[key]
            continue
        if key in lookup:
            eid, flip = lookup[key], False
        else:
            eid, flip = lookup[(key[1], key[0])], True
        vm = values[elem.edge_node_indices(eid)]
        if flip:
            vm = vm[::-1]
        if sign_of(vm[0]) == sign_of(vm[-1]):
            raise CutmeshError(f"edge {key} classified cut but endpoint signs agree")
        roots[key] = _edge_root(elem.order, vm, cfg)
    return roots


def _edge_point(elem, pair, u):
    a, b = pair
    ca, cb = elem.nodes[min(a, b)], elem.nodes[max(a, b)]
    return (1.0 - u) / 2 * ca + (1.0 + u) / 2 * cb


# -- Newton search -------------------------------------------------------------


def _interpolate_at(elem, values, points):
    return elem.shape_functions(points) @ values


def _gradient_at(elem, values, points):
    return np.einsum("mnd,n->md", elem.shape_gradients(points), values)


def _newton_batch(elem, values, starts, dirs, cfg, live=False):
    """Damped Newton search toward the zero set along fixed or live
    directions; returns the converged points.

    Iterates are clamped back onto the reference domain whenever they
    overshoot it by more than ``domain_tol``; a node whose residual
    grows three times in a row stops early and the search fails unless
    its best iterate already meets the tolerance.
    """
    r = np.array(starts, dtype=float)
    if r.size == 0:
        return r
    m = r.shape[0]
    best = r.copy()
    best_res = np.full(m, np.inf)
    prev = np.full(m, np.inf)
    grow = np.zeros(m, dtype=int)
    active = np.ones(m, dtype=bool)
    target = 0.01 * cfg.newton_tol
    for _ in range(cfg.max_iterations):
        phi = _interpolate_at(elem, values, r)
        res = np.abs(phi)
        upd = res < best_res
        best[upd] = r[upd]
        best_res[upd] = res[upd]
        grow = np.where(res >= prev, grow + 1, 0)
        active &= (res > target) & (grow < 3)
        if not active.any():
            break
        prev = res
        grad = _gradient_at(elem, values, r)
        if live:
            norms = np.linalg.norm(grad, axis=1)
            if (norms[active] < cfg.degenerate_tol).any():
                raise DegenerateGradientError("vanishing gradient in live search")
            dirs = grad / np.maximum(norms, cfg.degenerate_tol)[:, None]
        denom = np.einsum("md,md->m", grad, dirs)
        if (np.abs(denom[active]) < cfg.degenerate_tol).any():
            raise DegenerateGradientError(
                "search direction orthogonal to the level-set gradient"
            )
        step = np.where(active, phi / np.where(active, denom, 1.0), 0.0)
        r = r - step[:, None] * dirs
        viol = elem.violation(r)
        for i in np.nonzero(viol > cfg.domain_tol)[0]:
            r[i] = elem.clamp(r[i])

    viol = elem.violation(best)
    if (viol > cfg.domain_tol).any():
        raise RootSearchError("interface node search left the reference domain")
    for i in np.nonzero(viol > 0)[0]:
        best[i] = elem.clamp(best[i])
        best_res[i] = abs(_interpolate_at(elem, values, best[i : i + 1])[0])
    worst = best_res.max()
    if worst > cfg.newton_tol:
        raise RootSearchError(f"interface node search stalled at residual {worst:.3e}")
    return best


def _rot90(v):
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _unit(v, tol):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if (n < tol).any():
        raise DegenerateGradientError("cannot normalize a vanishing direction")
    return v / n


# -- 2D interface reconstruction -----------------------------------------------


def build_start_values_2d(elem, nodal_values, topology, intersections, cfg):
    """Start points and search directions for the interface nodes.

    Returns (points, directions, live): the p+1 start points from the
    lone-corner cut edge toward the other, the per-node unit directions
    (ignored when live), and whether the direction tracks the gradient.
    """
    variant = cfg.variant
    order = elem.order
    values = np.asarray(nodal_values, dtype=float)
    perm = topology.permutation
    c0 = elem.nodes[perm[0]]
    p1 = _edge_point(elem, topology.cut_edges[0], intersections[tuple(sorted(topology.cut_edges[0]))])
    p2 = _edge_point(elem, topology.cut_edges[1], intersections[tuple(sorted(topology.cut_edges[1]))])
    chord = p2 - p1
    s = np.linspace(0.0, 1.0, order + 1)

    hermite = variant.intermediate == 2
    if hermite:
        tangents = []
        for pt in (p1, p2):
            g = _gradient_at(elem, values, pt[None, :])[0]
            if np.linalg.norm(g) < cfg.degenerate_tol:
                hermite = False
                break
            t = _rot90(g)
            t = t / np.linalg.norm(t)
            if t @ chord < 0:
                t = -t
            tangents.append(t * np.linalg.norm(chord))

    if hermite:
        m0, m1 = tangents
        s2, s3 = s * s, s * s * s
        starts = (
            np.outer(2 * s3 - 3 * s2 + 1, p1)
            + np.outer(s3 - 2 * s2 + s, m0)
            + np.outer(-2 * s3 + 3 * s2, p2)
            + np.outer(s3 - s2, m1)
        )
        deriv = (
            np.outer(6 * s2 - 6 * s, p1)
            + np.outer(3 * s2 - 4 * s + 1, m0)
            + np.outer(-6 * s2 + 6 * s, p2)
            + np.outer(3 * s2 - 2 * s, m1)
        )
    else:
        starts = np.outer(1.0 - s, p1) + np.outer(s, p2)
        deriv = np.tile(chord, (order + 1, 1))

    live = False
    if variant.direction == 1:
        dirs = _unit(c0[None, :] - starts, cfg.degenerate_tol)
    elif variant.direction == 2:
        c1 = elem.nodes[perm[1]]
        c2 = elem.nodes[perm[2]]
        d0 = (c1 - c0) / np.linalg.norm(c1 - c0)
        d1 = (c2 - c0) / np.linalg.norm(c2 - c0)
        if d0 @ d1 < 0:
            d1 = -d1
        dirs = _unit(np.outer(1.0 - s, d0) + np.outer(s, d1), cfg.degenerate_tol)
    elif variant.direction == 3:
        dirs = _unit(_rot90(deriv), cfg.degenerate_tol)
    elif variant.direction == 4:
        if variant.gradient_live:
            live, dirs = True, np.zeros_like(starts)
        else:
            dirs = _unit(_gradient_at(elem, values, starts), cfg.degenerate_tol)
    else:  # pragma: no cover - parse() rejects other codes
        raise InvalidArgumentError(f"unknown direction {variant.direction}")
    return starts, dirs, live


def _reconstruct_triangle_curve(elem, values, cfg, topology, fixed_cuts=None):
    """Monotone interface nodes plus the sorted corner pairs of the cut
    edges carrying the first and last node."""
    cuts = find_edge_intersections(elem, values, topology, cfg, fixed=fixed_cuts)
    starts, dirs, live = build_start_values_2d(elem, values, topology, cuts, cfg)
    mono = starts.copy()
    if elem.order > 1:
        mono[1:-1] = _newton_batch(
            elem, values, starts[1:-1], dirs[1:-1], cfg, live=live
        )
    first = tuple(sorted(topology.cut_edges[0]))
    second = tuple(sorted(topology.cut_edges[1]))
    return mono, first, second


@dataclass
class InterfaceElement:
    """Higher-order element meshing a piece of the zero set.

    Nodes are in the element-lattice ordering of ``family`` and live in
    the coordinates of the reference element they were built on.
    ``generation`` is the index of the level-set function the element
    belongs to; ``signs`` tags the side taken for each function (0 in
    the element's own slot).
    """

    family: ElementFamily
    order: int
    nodes: np.ndarray
    generation: int = 0
    signs: tuple = ()


def reconstruct_2d(elem, nodal_values, cfg=None, topology=None):
    """Mesh the zero curve inside a cut triangle with one line element."""
    cfg = cfg or ReconstructionConfig()
    values = np.asarray(nodal_values, dtype=float)
    if topology is None:
        topology = classify_topology(elem, values)
    if topology.case != "Triangle":
        raise InvalidArgumentError(f"expected a cut triangle, got {topology.case}")
    mono, _, _ = _reconstruct_triangle_curve(elem, values, cfg, topology)
    nodes = np.concatenate([[mono[0], mono[-1]], mono[1:-1]])
    return InterfaceElement(ElementFamily.LINE, elem.order, nodes)


# -- 3D interface reconstruction -----------------------------------------------


@lru_cache(maxsize=None)
def _face_of_corners():
    return {frozenset(face): k for k, face in enumerate(_TETRA_FACES)}


@lru_cache(maxsize=None)
def _interior_node_ids(family, order):
    elem = reference_element(family, order)
    used = list(range(elem.n_corners))
    for e in range(len(elem.edges)):
        used.extend(int(i) for i in elem.edge_node_indices(e))
    ids = np.setdiff1d(np.arange(elem.n_nodes), np.array(used, dtype=int))
    ids.setflags(write=False)
    return ids


def _face_curve(elem, values, volume_roots, pair_from, pair_to, cfg):
    """Interface curve on the face shared by two cut edges, oriented
    from the root on ``pair_from`` to the one on ``pair_to``, mapped to
    volume coordinates."""
    order = elem.order
    corners = frozenset(pair_from) | frozenset(pair_to)
    fid = _face_of_corners()[corners]
    face = _TETRA_FACES[fid]
    tri = reference_element(ElementFamily.TRIANGLE, order)
    fvals = values[elem.face_node_indices(face)]

    local = {}
    for pair in (pair_from, pair_to):
        key = tuple(sorted(pair))
        ia, ib = face.index(key[0]), face.index(key[1])
        u = volume_roots[key]
        if ia < ib:
            local[(ia, ib)] = u
        else:
            local[(ib, ia)] = -u

    topo = classify_topology(tri, fvals)
    if topo.case != "Triangle":
        raise CutmeshError("cut tetra face does not classify as a cut triangle")
    mono, first, second = _reconstruct_triangle_curve(
        tri, fvals, cfg, topo, fixed_cuts=local
    )

    a, b, c = (elem.nodes[v] for v in face)
    vol = a + mono @ np.stack([b - a, c - a])

    key_from = tuple(sorted(pair_from))
    local_from = tuple(sorted((face.index(key_from[0]), face.index(key_from[1]))))
    if first != local_from:
        if second != local_from:
            raise CutmeshError("face curve does not end on the expected edges")
        vol = vol[::-1]
    # exact shared corner coordinates
    vol[0] = _edge_point(elem, pair_from, volume_roots[key_from])
    vol[-1] = _edge_point(elem, pair_to, volume_roots[tuple(sorted(pair_to))])
    return vol


def _fd_surface_normals(ev, pts, h=1e-6):
    du = (ev(pts + [h, 0.0]) - ev(pts - [h, 0.0])) / (2 * h)
    dv = (ev(pts + [0.0, h]) - ev(pts - [0.0, h])) / (2 * h)
    return np.cross(du, dv)


def reconstruct_3d(elem, nodal_values, cfg=None, topology=None):
    """Mesh the zero surface inside a cut tetra with one triangle (3-1
    corner split) or quad (2-2 split) element."""
    cfg = cfg or ReconstructionConfig()
    values = np.asarray(nodal_values, dtype=float)
    if topology is None:
        topology = classify_topology(elem, values)
    if topology.case not in ("TetraTop1", "TetraTop2"):
        raise InvalidArgumentError(f"expected a cut tetra, got {topology.case}")
    order = elem.order
    roots = find_edge_intersections(elem, values, topology, cfg)
    qpoints = [
        _edge_point(elem, pair, roots[tuple(sorted(pair))])
        for pair in topology.cut_edges
    ]

    if topology.case == "TetraTop1":
        family = ElementFamily.TRIANGLE
        ring = topology.cut_edges  # Q on (n1,n2), (n1,n3), (n1,n4)
    else:
        family = ElementFamily.QUAD
        ring = topology.cut_edges  # Q1..Q4
    target = reference_element(family, order)
    n_ring = len(ring)

    nodes = np.zeros((target.n_nodes, 3))
    nodes[:n_ring] = qpoints
    curves = []
    for k in range(n_ring):
        curve = _face_curve(elem, values, roots, ring[k], ring[(k + 1) % n_ring], cfg)
        curves.append(curve)
        nodes[target.edge_node_indices(k)] = curve

    inner_ids = _interior_node_ids(family, order)
    if inner_ids.size:
        if family is ElementFamily.TRIANGLE:
            ev = map_tri_from_edges(order, curves)
        else:
            ev = map_quad_from_edges(order, curves)
        starts = ev(target.nodes[inner_ids][:, :2])
        inner = cfg.variant.inner
        live = inner == "C"
        if inner == "A":
            dirs = _unit(
                _fd_surface_normals(ev, target.nodes[inner_ids][:, :2]),
                cfg.degenerate_tol,
            )
        elif inner == "B":
            dirs = _unit(_gradient_at(elem, values, starts), cfg.degenerate_tol)
        else:
            dirs = np.zeros_like(starts)
        nodes[inner_ids] = _newton_batch(elem, values, starts, dirs, cfg, live=live)

    return InterfaceElement(family, order, nodes)


# -- self-similar refinement ---------------------------------------------------

_TRI_CHILDREN = (
    ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5)),
    ((1.0, 0.0), (0.5, 0.5), (0.5, 0.0)),
    ((0.0, 1.0), (0.0, 0.5), (0.5, 0.5)),
    ((0.5, 0.0), (0.5, 0.5), (0.0, 0.5)),
)

# Midpoint-octahedron split along the diagonal m01-m23; orientations all
# positive in the reference chart.
_TET_CHILDREN = (
    ((0.0, 0.0, 0.0), (0.5, 0.0, 0.0), (0.0, 0.5, 0.0), (0.0, 0.0, 0.5)),
    ((1.0, 0.0, 0.0), (0.5, 0.5, 0.0), (0.5, 0.0, 0.0), (0.5, 0.0, 0.5)),
    ((0.0, 1.0, 0.0), (0.0, 0.5, 0.0), (0.5, 0.5, 0.0), (0.0, 0.5, 0.5)),
    ((0.0, 0.0, 1.0), (0.0, 0.0, 0.5), (0.0, 0.5, 0.5), (0.5, 0.0, 0.5)),
    ((0.5, 0.0, 0.0), (0.5, 0.5, 0.0), (0.0, 0.5, 0.0), (0.0, 0.5, 0.5)),
    ((0.5, 0.0, 0.0), (0.5, 0.0, 0.5), (0.5, 0.5, 0.0), (0.0, 0.5, 0.5)),
    ((0.5, 0.0, 0.0), (0.0, 0.0, 0.5), (0.5, 0.0, 0.5), (0.0, 0.5, 0.5)),
    ((0.5, 0.0, 0.0), (0.0, 0.5, 0.0), (0.0, 0.0, 0.5), (0.0, 0.5, 0.5)),
)


def child_reference_corners(family, k):
    table = _TRI_CHILDREN if family is ElementFamily.TRIANGLE else _TET_CHILDREN
    return np.array(table[k])


def n_children(family):
    return 4 if family is ElementFamily.TRIANGLE else 8


@lru_cache(maxsize=None)
def _restriction_matrix(family, order, k):
    elem = reference_element(family, order)
    corners = child_reference_corners(family, k)
    lattice = elem.nodes
    bary = np.column_stack([1.0 - lattice.sum(axis=1), lattice])
    mat = elem.shape_functions(bary @ corners)
    mat.setflags(write=False)
    return mat


def restrict_values(family, order, values, k):
    """Nodal data of child k: the parent interpolant restricted exactly
    to the child's lattice."""
    return _restriction_matrix(family, order, k) @ np.asarray(values, dtype=float)


@dataclass
class RefinementNode:
    corners: np.ndarray  # in root reference coordinates
    values: np.ndarray
    depth: int
    lineage: tuple


class RefinementTree:
    """Bookkeeping for self-similar refinement of one cut element."""

    def __init__(self, family, order, values):
        elem = reference_element(family, order)
        self.family = family
        self.order = order
        self._next = 1
        root = RefinementNode(
            elem.corners.copy(), np.asarray(values, dtype=float), 0, ()
        )
        self.leaves = {0: root}

    def refine(self, leaf_id):
        node = self.leaves.pop(leaf_id)
        ids = []
        bary_cols = lambda c: np.column_stack([1.0 - c.sum(axis=1), c])
        for k in range(n_children(self.family)):
            ref = child_reference_corners(self.family, k)
            corners = bary_cols(ref) @ node.corners
            values = restrict_values(self.family, self.order, node.values, k)
            child = RefinementNode(corners, values, node.depth + 1, node.lineage + (k,))
            self.leaves[self._next] = child
            ids.append(self._next)
            self._next += 1
        return tuple(ids)


def refine(tree, leaf_id):
    """Split a leaf into self-similar children carrying the exact
    restriction of its nodal data."""
    return tree.refine(leaf_id)

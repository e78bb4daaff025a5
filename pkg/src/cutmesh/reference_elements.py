"""Reference elements with equispaced Lagrange nodes.

Five element families are supported, each defined as a tensor product of
simplex factors:

========== ================= =========================================
family     factors           reference domain
========== ================= =========================================
LINE       1-simplex         u in [-1, 1]
TRIANGLE   2-simplex         a, b >= 0, a + b <= 1
QUAD       1-simplex x2      (a, b) in [-1, 1]^2
TETRA      3-simplex         a, b, c >= 0, a + b + c <= 1
PRISM      2-simplex x       (a, b) in triangle, c in [-1, 1]
           1-simplex
========== ================= =========================================

Nodes form the equispaced lattice of the requested order.  Corner nodes
are listed first, in the fixed order given by the ``corners`` attribute;
the remaining nodes follow in lexicographic order of their integer
lattice indices.  Shape functions are evaluated through products of
one-dimensional lattice polynomials in the barycentric coordinates of
each factor, which keeps the Lagrange delta property exact to round-off
for every supported order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from itertools import product

import numpy as np

from .errors import InvalidArgumentError

MAX_ORDER = 6


class ElementFamily(Enum):
    LINE = "line"
    TRIANGLE = "triangle"
    QUAD = "quad"
    TETRA = "tetra"
    PRISM = "prism"


# Dimension of each simplex factor making up a family.
_FACTORS = {
    ElementFamily.LINE: (1,),
    ElementFamily.TRIANGLE: (2,),
    ElementFamily.QUAD: (1, 1),
    ElementFamily.TETRA: (3,),
    ElementFamily.PRISM: (2, 1),
}

# Corner lattice indices per factor, scaled by the order p at build time.
# Entries are unit multi-indices; (0,) * d is the factor origin.
_FACTOR_CORNERS = {
    1: ((0,), (1,)),
    2: ((0, 0), (1, 0), (0, 1)),
    3: ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)),
}

# Corner ordering of the full element, as tuples of per-factor corner ids.
_CORNER_ORDER = {
    ElementFamily.LINE: ((0,), (1,)),
    ElementFamily.TRIANGLE: ((0,), (1,), (2,)),
    ElementFamily.QUAD: ((0, 0), (1, 0), (1, 1), (0, 1)),
    ElementFamily.TETRA: ((0,), (1,), (2,), (3,)),
    ElementFamily.PRISM: ((0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)),
}

# Edges as pairs of corner ids, oriented; triangles and quads follow the
# cyclic boundary orientation used by the transfinite maps.
_EDGES = {
    ElementFamily.LINE: ((0, 1),),
    ElementFamily.TRIANGLE: ((0, 1), (1, 2), (2, 0)),
    ElementFamily.QUAD: ((0, 1), (1, 2), (2, 3), (3, 0)),
    ElementFamily.TETRA: ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)),
    ElementFamily.PRISM: (
        (0, 1), (1, 2), (2, 0),
        (3, 4), (4, 5), (5, 3),
        (0, 3), (1, 4), (2, 5),
    ),
}

# Tetra faces as corner triples, outward oriented; face k sits opposite
# corner k.
_TETRA_FACES = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))


def _simplex_indices(dim, order):
    """All integer lattice multi-indices of a ``dim``-simplex of ``order``."""
    if dim == 1:
        return [(i,) for i in range(order + 1)]
    if dim == 2:
        return [(i, j) for i in range(order + 1) for j in range(order + 1 - i)]
    if dim == 3:
        return [
            (i, j, k)
            for i in range(order + 1)
            for j in range(order + 1 - i)
            for k in range(order + 1 - i - j)
        ]
    raise InvalidArgumentError(f"unsupported simplex dimension {dim}")


def _lattice_polys(order, lam, with_derivative=False):
    """Lattice polynomials P_i(lam), i = 0..order, on one barycentric axis.

    P_0 = 1 and P_i(lam) = prod_{m<i} (order*lam - m) / (i - m); the value
    is 1 at lam = i/order and 0 at lam = m/order for m < i.  Returns an
    array of shape (order + 1,) + lam.shape, plus derivatives with respect
    to lam when requested.
    """
    lam = np.asarray(lam, dtype=float)
    vals = np.empty((order + 1,) + lam.shape)
    vals[0] = 1.0
    if with_derivative:
        ders = np.zeros((order + 1,) + lam.shape)
    for i in range(1, order + 1):
        fac = (order * lam - (i - 1)) / i
        vals[i] = vals[i - 1] * fac
        if with_derivative:
            ders[i] = ders[i - 1] * fac + vals[i - 1] * (order / i)
    if with_derivative:
        return vals, ders
    return vals


def _factor_barycentric(dim, coords):
    """Barycentric coordinates of one factor plus their constant gradients."""
    if dim == 1:
        u = coords[..., 0]
        lam = np.stack([(1.0 - u) / 2.0, (1.0 + u) / 2.0], axis=0)
        grad = np.array([[-0.5], [0.5]])
    else:
        first = 1.0 - coords.sum(axis=-1)
        lam = np.concatenate(
            [first[None], np.moveaxis(coords, -1, 0)], axis=0
        )
        grad = np.vstack([-np.ones((1, dim)), np.eye(dim)])
    return lam, grad


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Reference element of one family at a fixed polynomial order."""

    family: ElementFamily
    order: int

    def __post_init__(self):
        if not 1 <= self.order <= MAX_ORDER:
            raise InvalidArgumentError(
                f"order must be in 1..{MAX_ORDER}, got {self.order}"
            )

    # -- lattice bookkeeping -------------------------------------------------

    @cached_property
    def factor_dims(self):
        return _FACTORS[self.family]

    @cached_property
    def dim(self):
        return sum(self.factor_dims)

    @cached_property
    def lattice(self):
        """Node lattice indices, one tuple of per-factor multi-indices each."""
        p = self.order
        per_factor = [_simplex_indices(d, p) for d in self.factor_dims]
        all_ids = [tuple(c) for c in product(*per_factor)]
        corner_ids = []
        for corner in _CORNER_ORDER[self.family]:
            key = tuple(
                tuple(p * x for x in _FACTOR_CORNERS[d][cid])
                for d, cid in zip(self.factor_dims, corner)
            )
            corner_ids.append(key)
        rest = sorted(set(all_ids) - set(corner_ids))
        return tuple(corner_ids + rest)

    @cached_property
    def node_index(self):
        return {key: i for i, key in enumerate(self.lattice)}

    @cached_property
    def n_nodes(self):
        return len(self.lattice)

    @cached_property
    def n_corners(self):
        return len(_CORNER_ORDER[self.family])

    @cached_property
    def nodes(self):
        """Reference coordinates of all nodes, corners first."""
        return np.array([self._coords_of(key) for key in self.lattice])

    def _coords_of(self, key):
        p = self.order
        coords = []
        for d, idx in zip(self.factor_dims, key):
            if d == 1:
                coords.append(2.0 * idx[0] / p - 1.0)
            else:
                coords.extend(x / p for x in idx)
        return coords

    @cached_property
    def corners(self):
        return self.nodes[: self.n_corners]

    @cached_property
    def edges(self):
        return _EDGES[self.family]

    @cached_property
    def faces(self):
        if self.family is not ElementFamily.TETRA:
            raise InvalidArgumentError("faces table exists for tetra only")
        return _TETRA_FACES

    @cached_property
    def measure(self):
        """Measure of the reference domain."""
        return {
            ElementFamily.LINE: 2.0,
            ElementFamily.TRIANGLE: 0.5,
            ElementFamily.QUAD: 4.0,
            ElementFamily.TETRA: 1.0 / 6.0,
            ElementFamily.PRISM: 1.0,
        }[self.family]

    def edge_node_indices(self, edge):
        """Node indices along one edge, ordered from first to second corner.

        Supported for LINE, TRIANGLE and QUAD, which is where edge-ordered
        node access is needed when assembling boundary curves.
        """
        p = self.order
        ca, cb = self.edges[edge]
        key_a = self.lattice[ca]
        key_b = self.lattice[cb]
        out = []
        for m in range(p + 1):
            key = tuple(
                tuple(((p - m) * xa + m * xb) // p for xa, xb in zip(fa, fb))
                for fa, fb in zip(key_a, key_b)
            )
            out.append(self.node_index[key])
        return np.array(out, dtype=int)

    def face_node_indices(self, corner_ids):
        """Node indices of the sub-triangle lattice spanned by three corners.

        ``corner_ids`` are element corner numbers; nodes are returned in the
        TRIANGLE lattice ordering of the face chart (corners first, sorted
        lattice rest), matching ``ReferenceElement(TRIANGLE, p).lattice``.
        """
        p = self.order
        keys = [np.array(self.lattice[c][0]) for c in corner_ids]
        tri = ReferenceElement(ElementFamily.TRIANGLE, p)
        out = []
        for (m, l) in (key[0] for key in tri.lattice):
            combo = ((p - m - l) * keys[0] + m * keys[1] + l * keys[2]) // p
            out.append(self.node_index[(tuple(int(x) for x in combo),)])
        return np.array(out, dtype=int)

    # -- shape functions -----------------------------------------------------

    @cached_property
    def _bary_index(self):
        """Barycentric integer indices per factor, shape (n_factors, n, d+1)."""
        p = self.order
        tables = []
        for f, d in enumerate(self.factor_dims):
            rows = []
            for key in self.lattice:
                idx = key[f]
                rows.append((p - sum(idx),) + idx)
            tables.append(np.array(rows))
        return tables

    def _prepare(self, points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != self.dim:
            raise InvalidArgumentError(
                f"expected points of dimension {self.dim}, got {pts.shape[-1]}"
            )
        return pts, single

    def _factor_slices(self):
        out = []
        start = 0
        for d in self.factor_dims:
            out.append(slice(start, start + d))
            start += d
        return out

    def shape_functions(self, points):
        """Evaluate all shape functions at ``points``.

        Returns an array of shape (m, n_nodes), or (n_nodes,) for a single
        point.  Points outside the reference domain are allowed; the
        polynomial extension is evaluated.
        """
        pts, single = self._prepare(points)
        m = pts.shape[0]
        vals = np.ones((m, self.n_nodes))
        for f, (d, sl) in enumerate(zip(self.factor_dims, self._factor_slices())):
            lam, _ = _factor_barycentric(d, pts[:, sl])
            polys = _lattice_polys(self.order, lam)  # (p+1, d+1, m)
            bidx = self._bary_index[f]
            for c in range(d + 1):
                vals *= polys[bidx[:, c], c, :].T
        return vals[0] if single else vals

    def shape_gradients(self, points):
        """Gradients of all shape functions with respect to the reference
        coordinates, shape (m, n_nodes, dim) or (n_nodes, dim)."""
        pts, single = self._prepare(points)
        m = pts.shape[0]
        n = self.n_nodes
        slices = self._factor_slices()
        factor_vals = []
        factor_ders = []
        bary_grads = []
        for f, (d, sl) in enumerate(zip(self.factor_dims, slices)):
            lam, grad = _factor_barycentric(d, pts[:, sl])
            polys, dpolys = _lattice_polys(self.order, lam, with_derivative=True)
            bidx = self._bary_index[f]
            fv = [polys[bidx[:, c], c, :].T for c in range(d + 1)]  # (m, n) each
            fd = [dpolys[bidx[:, c], c, :].T for c in range(d + 1)]
            factor_vals.append(fv)
            factor_ders.append(fd)
            bary_grads.append(grad)
        out = np.zeros((m, n, self.dim))
        pairs = [
            (f, c)
            for f, d in enumerate(self.factor_dims)
            for c in range(d + 1)
        ]
        for f, c in pairs:
            term = factor_ders[f][c].copy()
            for f2, c2 in pairs:
                if (f2, c2) != (f, c):
                    term *= factor_vals[f2][c2]
            sl = slices[f]
            grad_row = bary_grads[f][c]
            for k_local, k in enumerate(range(sl.start, sl.stop)):
                out[:, :, k] += term * grad_row[k_local]
        return out[0] if single else out

    # -- domain membership ---------------------------------------------------

    def violation(self, points):
        """Largest constraint violation of each point; <= 0 means inside."""
        pts, single = self._prepare(points)
        v = np.full(pts.shape[0], -np.inf)
        for d, sl in zip(self.factor_dims, self._factor_slices()):
            x = pts[:, sl]
            if d == 1:
                v = np.maximum(v, np.abs(x[:, 0]) - 1.0)
            else:
                v = np.maximum(v, np.max(-x, axis=1))
                v = np.maximum(v, x.sum(axis=1) - 1.0)
        return v[0] if single else v

    def contains(self, points, tol=1e-12):
        """Domain membership with tolerance ``tol``."""
        return self.violation(points) <= tol

    def clamp(self, point):
        """Pull a point back onto the closed reference domain.

        Negative barycentric coordinates of each factor are zeroed and the
        remainder renormalized; 1-simplex factors are clipped to [-1, 1].
        """
        pt = np.asarray(point, dtype=float).copy()
        for d, sl in zip(self.factor_dims, self._factor_slices()):
            if d == 1:
                pt[sl] = np.clip(pt[sl], -1.0, 1.0)
            else:
                x = np.clip(pt[sl], 0.0, None)
                s = x.sum()
                if s > 1.0:
                    lam0 = 1.0 - s
                    # renormalize the clipped barycentric vector
                    full = np.concatenate([[max(lam0, 0.0)], x])
                    full /= full.sum()
                    x = full[1:]
                pt[sl] = x
        return pt


@lru_cache(maxsize=None)
def reference_element(family, order):
    """Shared, cached ReferenceElement instances."""
    return ReferenceElement(family, order)


# -- isoparametric mapping ----------------------------------------------------


def isoparametric_map(elem, node_coords, points):
    """Map reference ``points`` through the element spanned by ``node_coords``.

    ``node_coords`` has shape (n_nodes, d_target); the result has shape
    (m, d_target) or (d_target,) for a single point.
    """
    node_coords = np.asarray(node_coords, dtype=float)
    shapes = elem.shape_functions(points)
    return shapes @ node_coords


def jacobian(elem, node_coords, points):
    """Jacobian d(target)/d(reference) at ``points``.

    Shape (m, d_target, dim) or (d_target, dim) for a single point.
    """
    node_coords = np.asarray(node_coords, dtype=float)
    grads = elem.shape_gradients(points)
    single = grads.ndim == 2
    if single:
        grads = grads[None]
    jac = np.einsum("mni,nk->mki", grads, node_coords)
    return jac[0] if single else jac


def jacobian_determinant(elem, node_coords, points):
    """Volume scale factor of the isoparametric map at ``points``.

    For matching dimensions this is det(J); for an element embedded in a
    higher-dimensional target it is sqrt(det(J^T J)), the surface measure
    factor.
    """
    node_coords = np.asarray(node_coords, dtype=float)
    jac = jacobian(elem, node_coords, points)
    single = jac.ndim == 2
    if single:
        jac = jac[None]
    d_target = node_coords.shape[1]
    if d_target == elem.dim:
        det = np.linalg.det(jac)
    else:
        gram = np.einsum("mki,mkj->mij", jac, jac)
        det = np.sqrt(np.linalg.det(gram))
    return det[0] if single else det


# -- sample grids --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampleGrid:
    """Structured point set covering the closed reference domain.

    ``points`` is the union of the equispaced lattice of the requested
    density with the element nodes; both live on a common rational grid, so
    the union is computed exactly.  ``edge_indices`` orders the points on
    each element edge from first to second edge corner.  For tetrahedra,
    ``face_grids`` restricts the set to each face as a 2D triangle grid.
    """

    element: ReferenceElement
    density: int
    points: np.ndarray
    edge_indices: tuple
    face_grids: tuple = ()


def _factor_union(dim, density, order, denom):
    """Integer lattice tuples (over ``denom``) of lattice + node points."""
    pts = set()
    for src in (density, order):
        scale = denom // src
        for idx in _simplex_indices(dim, src):
            pts.add(tuple(x * scale for x in idx))
    return sorted(pts)


@lru_cache(maxsize=None)
def sample_grid(family, order, density):
    """Build the sample grid for ``(family, order)`` at ``density``.

    The density counts subdivisions per edge; the grid has density + 1
    points along each edge.  Requires density >= order + 1 so that sign
    checks see more structure than the interpolant's own lattice.
    """
    elem = reference_element(family, order)
    if density < order + 1:
        raise InvalidArgumentError(
            f"sample density must be at least order+1 ({order + 1}), got {density}"
        )
    denom = math.lcm(density, order)
    factor_pts = [
        _factor_union(d, density, order, denom) for d in elem.factor_dims
    ]
    keys = [tuple(key) for key in product(*factor_pts)]
    index_of = {key: i for i, key in enumerate(keys)}
    coords = []
    for key in keys:
        row = []
        for d, idx in zip(elem.factor_dims, key):
            if d == 1:
                row.append(2.0 * idx[0] / denom - 1.0)
            else:
                row.extend(x / denom for x in idx)
        coords.append(row)
    points = np.array(coords)

    edge_indices = []
    for ca, cb in elem.edges:
        key_a = _scale_corner(elem, ca, denom)
        key_b = _scale_corner(elem, cb, denom)
        on_edge = []
        for key in keys:
            t = _edge_parameter(key_a, key_b, key)
            if t is not None:
                on_edge.append((t, index_of[key]))
        on_edge.sort()
        edge_indices.append(tuple(i for _, i in on_edge))

    face_grids = ()
    if family is ElementFamily.TETRA:
        fg = []
        for face in _TETRA_FACES:
            fg.append(_tetra_face_grid(elem, face, keys, index_of, denom))
        face_grids = tuple(fg)
    return SampleGrid(elem, density, points, tuple(edge_indices), face_grids)


def _scale_corner(elem, corner, denom):
    p = elem.order
    key = elem.lattice[corner]
    return tuple(tuple(x * denom // p for x in f) for f in key)


def _edge_parameter(key_a, key_b, key):
    """Rational parameter of ``key`` on segment a..b, or None if off it."""
    num = None
    for fa, fb, fk in zip(key_a, key_b, key):
        for xa, xb, xk in zip(fa, fb, fk):
            dx = xb - xa
            if dx == 0:
                if xk != xa:
                    return None
            else:
                t = (xk - xa, dx)
                if num is None:
                    num = t
                elif t[0] * num[1] != num[0] * t[1]:
                    return None
    if num is None:
        return None
    t = num[0] / num[1]
    if not 0.0 <= t <= 1.0:
        return None
    return t


@dataclass(frozen=True, eq=False)
class TetraFaceGrid:
    """Sample points of one tetra face, charted as a reference triangle."""

    face: tuple
    volume_indices: np.ndarray
    local_points: np.ndarray
    edge_indices: tuple


def _tetra_face_grid(elem, face, keys, index_of, denom):
    corner_keys = [np.array(_scale_corner(elem, c, denom)[0]) for c in face]
    ka, kb, kc = corner_keys
    eb, ec = kb - ka, kc - ka
    entries = []
    for key in keys:
        rel = np.array(key[0]) - ka
        uv = _solve_integer_plane(eb, ec, rel)
        if uv is not None:
            entries.append((uv, index_of[key]))
    entries.sort()
    local = np.array([uv for uv, _ in entries])
    vol_idx = np.array([i for _, i in entries])
    lk = [(round(u * denom), round(v * denom)) for u, v in local]
    tri_corners = ((0, 0), (denom, 0), (0, denom))
    edges = []
    for ca, cb in ((0, 1), (1, 2), (2, 0)):
        on_edge = []
        for i, k in enumerate(lk):
            t = _edge_parameter((tri_corners[ca],), (tri_corners[cb],), (k,))
            if t is not None:
                on_edge.append((t, i))
        on_edge.sort()
        edges.append(tuple(i for _, i in on_edge))
    return TetraFaceGrid(tuple(face), vol_idx, local, tuple(edges))


def _solve_integer_plane(eb, ec, rel):
    """Solve rel = u*eb + v*ec over the rationals; None if off the plane."""
    # Pick two independent coordinate rows.
    rows = [(eb[i], ec[i], rel[i]) for i in range(3)]
    for i in range(3):
        for j in range(i + 1, 3):
            a1, b1, r1 = rows[i]
            a2, b2, r2 = rows[j]
            det = a1 * b2 - a2 * b1
            if det != 0:
                u = (r1 * b2 - r2 * b1) / det
                v = (a1 * r2 - a2 * r1) / det
                k = 3 - i - j
                a3, b3, r3 = rows[k]
                if abs(a3 * u + b3 * v - r3) > 1e-9:
                    return None
                if u < -1e-12 or v < -1e-12 or u + v > 1.0 + 1e-12:
                    return None
                return u, v
    return None


def default_sample_density(order):
    """Default sign-check density, 2p+1 subdivisions per edge."""
    return 2 * order + 1

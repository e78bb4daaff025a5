"""Gauss quadrature on the reference elements and its push-forward
through (possibly curved) element maps."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil

import numpy as np

from .errors import DecompositionError, InvalidArgumentError
from .reference_elements import ElementFamily, reference_element

DEFAULT_ORDER = 11


@dataclass(frozen=True)
class QuadratureRule:
    family: ElementFamily
    order: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self):
        return self.points.shape[0]


def _gauss_01(n):
    # Gauss-Legendre shifted to [0, 1]
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def build_rule(family, order):
    """Rule integrating polynomials of total degree <= order exactly
    (per-direction degree for the quad).  Simplex rules come from the
    collapsed-coordinate (Duffy) transform of tensor Gauss rules, whose
    extra Jacobian monomials raise the needed 1D degree by the counts
    below."""
    if order < 0 or order > 60:
        raise InvalidArgumentError(f"quadrature order {order} out of range")
    if family == ElementFamily.LINE:
        n = max(1, ceil((order + 1) / 2))
        x, w = np.polynomial.legendre.leggauss(n)
        return QuadratureRule(family, order, x[:, None].copy(), w.copy())
    if family == ElementFamily.QUAD:
        line = build_rule(ElementFamily.LINE, order)
        x = line.points[:, 0]
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(line.weights, line.weights)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        return QuadratureRule(family, order, pts, W.ravel())
    if family == ElementFamily.TRIANGLE:
        n = max(1, ceil((order + 2) / 2))
        s, ws = _gauss_01(n)
        S, T = np.meshgrid(s, s, indexing="ij")
        W = np.outer(ws, ws) * (1.0 - T)
        pts = np.column_stack([(S * (1.0 - T)).ravel(), T.ravel()])
        return QuadratureRule(family, order, pts, W.ravel())
    if family == ElementFamily.TETRA:
        n = max(1, ceil((order + 3) / 2))
        s, ws = _gauss_01(n)
        S, T, U = np.meshgrid(s, s, s, indexing="ij")
        a = S
        b = T * (1.0 - S)
        c = U * (1.0 - S) * (1.0 - T)
        W = (
            np.einsum("i,j,k->ijk", ws, ws, ws)
            * (1.0 - S) ** 2
            * (1.0 - T)
        )
        pts = np.column_stack([a.ravel(), b.ravel(), c.ravel()])
        return QuadratureRule(family, order, pts, W.ravel())
    if family == ElementFamily.PRISM:
        tri = build_rule(ElementFamily.TRIANGLE, order)
        line = build_rule(ElementFamily.LINE, order)
        m, n = tri.n_points, line.n_points
        pts = np.empty((m * n, 3))
        pts[:, :2] = np.repeat(tri.points, n, axis=0)
        pts[:, 2] = np.tile(line.points[:, 0], m)
        w = np.repeat(tri.weights, n) * np.tile(line.weights, m)
        return QuadratureRule(family, order, pts, w)
    raise InvalidArgumentError(f"unknown element family {family}")


@dataclass(frozen=True)
class MappedRule:
    """A quadrature rule pushed forward through an element map.

    ``points`` live in the map's target space, ``weights`` include the
    metric factor, and ``local_points`` keep the rule's reference
    coordinates so integrands given by nodal data can still be evaluated
    through shape functions.
    """

    points: np.ndarray
    weights: np.ndarray
    local_points: np.ndarray


def map_rule(rule, family, order, node_coords, surface=False):
    """Push a reference rule through the isoparametric map given by
    ``node_coords``.  With ``surface=True`` the metric factor is the
    Gram determinant root (codimension-one measure); otherwise it is the
    plain Jacobian determinant, which is required to be positive."""
    elem = reference_element(family, order)
    node_coords = np.asarray(node_coords, dtype=float)
    shapes, grads = _tabulated(family, order, rule.family, rule.order)
    points = shapes @ node_coords
    J = np.einsum("mnd,nk->mkd", grads, node_coords)
    if surface or node_coords.shape[1] != elem.dim:
        G = np.einsum("mki,mkj->mij", J, J)
        factor = np.sqrt(np.linalg.det(G))
    else:
        factor = np.linalg.det(J)
    return MappedRule(points, rule.weights * factor, rule.points)


@lru_cache(maxsize=None)
def _tabulated(geom_family, geom_order, rule_family, rule_order):
    elem = reference_element(geom_family, geom_order)
    rule = build_rule(rule_family, rule_order)
    shapes = elem.shape_functions(rule.points)
    grads = elem.shape_gradients(rule.points)
    shapes.setflags(write=False)
    grads.setflags(write=False)
    return shapes, grads


def compose_with_background(mapped, bg_family, bg_order, bg_node_coords):
    """Push an already-mapped rule through a background element map.
    The mapped points must live in the background reference element."""
    elem = reference_element(bg_family, bg_order)
    bg_node_coords = np.asarray(bg_node_coords, dtype=float)
    shapes = elem.shape_functions(mapped.points)
    grads = elem.shape_gradients(mapped.points)
    points = shapes @ bg_node_coords
    J = np.einsum("mnd,nk->mkd", grads, bg_node_coords)
    if bg_node_coords.shape[1] == elem.dim:
        factor = np.abs(np.linalg.det(J))
    else:
        G = np.einsum("mki,mkj->mij", J, J)
        factor = np.sqrt(np.linalg.det(G))
    return MappedRule(points, mapped.weights * factor, mapped.local_points)


def map_rule_volume(rule, sub, background=None):
    """Mapped volume rule on a sub-element, optionally pushed through a
    background element map (node coordinate array of that element).

    ``sub`` needs ``family``, ``order`` and ``nodes``; the sub-element
    Jacobian must stay positive at the rule points.
    """
    mapped = map_rule(rule, sub.family, sub.order, sub.nodes)
    if np.any(mapped.weights * np.sign(rule.weights) <= 0.0):
        raise DecompositionError(
            "non-positive Jacobian at a volume quadrature point"
        )
    if background is not None:
        bg_family, bg_order, bg_nodes = background
        mapped = compose_with_background(mapped, bg_family, bg_order, bg_nodes)
    return mapped


def map_rule_surface(rule, interface, background=None):
    """Mapped codimension-one rule on an interface element.  The metric
    factor is the Gram determinant root; a degenerate tangent raises.

    With a background element given, the interface nodes are first
    carried into physical space by its map (Gram factors do not chain
    multiplicatively in codimension one, so the composition happens at
    the node level).
    """
    nodes = interface.nodes
    if background is not None:
        bg_family, bg_order, bg_nodes = background
        bg_elem = reference_element(bg_family, bg_order)
        nodes = bg_elem.shape_functions(nodes) @ np.asarray(bg_nodes, dtype=float)
    mapped = map_rule(rule, interface.family, interface.order, nodes, surface=True)
    if not np.all(np.isfinite(mapped.weights)) or np.any(
        np.abs(mapped.weights) < 1e-300
    ):
        raise DecompositionError(
            "degenerate tangent at a surface quadrature point"
        )
    return mapped


def integrate(mapped, fn=None, values=None):
    """Sum of weights times integrand.  Exactly one of ``fn`` (callable
    on the mapped points) and ``values`` (precomputed at those points)
    may be given; with neither, the result is the measure."""
    if fn is not None and values is not None:
        raise InvalidArgumentError("pass either fn or values, not both")
    if fn is not None:
        values = np.asarray(fn(mapped.points), dtype=float)
    if values is None:
        return float(mapped.weights.sum())
    return float(mapped.weights @ values)


def element_measure(family, order, node_coords, quad_order=DEFAULT_ORDER):
    """Volume (or area) of a single mapped element."""
    rule = build_rule(family, quad_order)
    return integrate(map_rule(rule, family, order, node_coords))

"""Analytic level-set functions and their nodal sampling onto meshes.

The pipeline itself only ever sees nodal values; the analytic functions
here exist to produce those values and to serve as references when
measuring quadrature errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingularPointError
from .reference_elements import reference_element

DEFAULT_RADIUS = 0.7123

# Corner values closer to zero than this are pushed to the positive side
# before any cut classification happens, so zero never reaches the sign
# logic at element corners.
CORNER_PERTURBATION = 1e-13


@dataclass(frozen=True)
class AnalyticField:
    """Scalar field ``phi(x)`` with an optional exact gradient."""

    name: str
    dim: int
    fn: object
    grad_fn: object = None

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        squeeze = points.ndim == 1
        pts = np.atleast_2d(points)
        if pts.shape[1] != self.dim:
            raise InvalidArgumentError(
                f"{self.name} expects points in {self.dim}D, got shape {pts.shape}"
            )
        vals = np.asarray(self.fn(pts), dtype=float)
        return vals[0] if squeeze else vals

    def gradient(self, points):
        if self.grad_fn is None:
            raise InvalidArgumentError(f"{self.name} has no analytic gradient")
        points = np.asarray(points, dtype=float)
        squeeze = points.ndim == 1
        pts = np.atleast_2d(points)
        grads = np.asarray(self.grad_fn(pts), dtype=float)
        return grads[0] if squeeze else grads


def circle(radius=DEFAULT_RADIUS):
    """Signed distance to a circle of the given radius about the origin."""

    def fn(x):
        return np.hypot(x[:, 0], x[:, 1]) - radius

    def grad(x):
        r = np.hypot(x[:, 0], x[:, 1])
        _check_radial(r)
        return x / r[:, None]

    return AnalyticField(f"circle(r={radius})", 2, fn, grad)


def sphere(radius=DEFAULT_RADIUS):
    """Signed distance to a sphere of the given radius about the origin."""

    def fn(x):
        return np.linalg.norm(x, axis=1) - radius

    def grad(x):
        r = np.linalg.norm(x, axis=1)
        _check_radial(r)
        return x / r[:, None]

    return AnalyticField(f"sphere(r={radius})", 3, fn, grad)


def flower(base=0.5, amplitude=0.1, lobes=8):
    """Radial star shape r(theta) = base + amplitude*sin(lobes*theta).

    Undefined at the origin; evaluation near it raises so that sampling
    never silently produces garbage from the angle branch cut.
    """

    def fn(x):
        r = np.hypot(x[:, 0], x[:, 1])
        _check_radial(r)
        theta = np.arctan2(x[:, 1], x[:, 0])
        return r - (base + amplitude * np.sin(lobes * theta))

    def grad(x):
        r = np.hypot(x[:, 0], x[:, 1])
        _check_radial(r)
        theta = np.arctan2(x[:, 1], x[:, 0])
        # d theta / dx = (-y, x)/r^2
        dr = x / r[:, None]
        dtheta = np.column_stack([-x[:, 1], x[:, 0]]) / (r * r)[:, None]
        return dr - amplitude * lobes * np.cos(lobes * theta)[:, None] * dtheta

    return AnalyticField(
        f"flower(base={base},amp={amplitude},lobes={lobes})", 2, fn, grad
    )


def bumpy_sphere(radius=DEFAULT_RADIUS, amplitude=0.1):
    """Sphere level set with an additive trigonometric perturbation."""

    def fn(x):
        r = np.linalg.norm(x, axis=1)
        bump = np.cos(2 * np.pi * x).sum(axis=1)
        return r - radius + amplitude * bump

    def grad(x):
        r = np.linalg.norm(x, axis=1)
        _check_radial(r)
        return x / r[:, None] - amplitude * 2 * np.pi * np.sin(2 * np.pi * x)

    return AnalyticField(f"bumpy_sphere(r={radius},amp={amplitude})", 3, fn, grad)


def plane(normal, offset=0.0):
    """Half-space boundary: phi(x) = unit(normal) . x - offset."""
    normal = np.asarray(normal, dtype=float)
    norm = np.linalg.norm(normal)
    if norm < 1e-14:
        raise InvalidArgumentError("plane normal must be nonzero")
    unit = normal / norm
    dim = unit.shape[0]

    def fn(x):
        return x @ unit - offset

    def grad(x):
        return np.broadcast_to(unit, x.shape).copy()

    return AnalyticField(f"plane(n={tuple(unit)},d={offset})", dim, fn, grad)


def custom(fn, dim, name="custom", grad_fn=None):
    """Wrap an arbitrary callable ``fn((m, dim)) -> (m,)`` as a field."""
    return AnalyticField(name, dim, fn, grad_fn)


def _check_radial(r):
    if np.any(r < 1e-14):
        raise SingularPointError(
            "level-set function evaluated at its polar singularity"
        )


def evaluate_analytic(field, x):
    """Evaluate an analytic field at one physical point."""
    return float(field(np.asarray(x, dtype=float)))


def named_field(name, dim):
    """Look up a test level-set function by name ("circle", "flower",
    "sphere", "bumpy"); dim resolves the ambiguity-free default set."""
    registry = {
        (2, "circle"): circle,
        (2, "flower"): flower,
        (3, "sphere"): sphere,
        (3, "bumpy"): bumpy_sphere,
    }
    try:
        return registry[(dim, name)]()
    except KeyError:
        known = sorted(n for d, n in registry if d == dim)
        raise InvalidArgumentError(
            f"unknown {dim}D level-set function {name!r}; choose from {known}"
        )


# Polynomial/trigonometric integrands used by the convergence studies.


def integrand_one(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.ones(x.shape[0])


def integrand_2d(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a, b = x[:, 0], x[:, 1]
    return 0.5 * a + 0.25 * b + a ** 2 + 2.0 * b ** 3


def integrand_3d(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x[:, 0] ** 2 + x[:, 1] ** 2 + 0.5 * np.cos(x[:, 2])


def default_integrand(dim):
    if dim == 2:
        return integrand_2d
    if dim == 3:
        return integrand_3d
    raise InvalidArgumentError(f"no default integrand in dimension {dim}")


def sample_to_mesh(fields, mesh, perturbation=CORNER_PERTURBATION):
    """Evaluate fields at mesh nodes, returning an array of shape
    (n_fields, n_nodes).

    Corner values with magnitude below ``perturbation`` are replaced by
    +perturbation: a node that sits exactly on the zero level set would
    otherwise make the cut/uncut classification ambiguous, and moving it
    to the positive side changes any integral by an amount far below the
    discretization error.
    """
    single = isinstance(fields, AnalyticField)
    if single:
        fields = [fields]
    values = np.empty((len(fields), mesh.nodes.shape[0]))
    for k, f in enumerate(fields):
        if f.dim != mesh.dim:
            raise InvalidArgumentError(
                f"field {f.name} is {f.dim}D but mesh is {mesh.dim}D"
            )
        values[k] = f(mesh.nodes)
    if perturbation > 0.0:
        cids = mesh.corner_node_ids
        block = values[:, cids]
        block[np.abs(block) < perturbation] = perturbation
        values[:, cids] = block
    return values[0] if single else values


def interpolate(elem, nodal_values, points):
    """Evaluate the element interpolant at reference points."""
    shapes = elem.shape_functions(points)
    return shapes @ np.asarray(nodal_values, dtype=float)


def interpolate_gradient(elem, nodal_values, points):
    """Reference-coordinate gradient of the element interpolant."""
    grads = elem.shape_gradients(points)
    return np.einsum("mnd,n->md", grads, np.asarray(nodal_values, dtype=float))


def restrict_to_simplex(elem, nodal_values, sub_corner_coords):
    """Nodal values of the interpolant on a straight sub-simplex whose
    corners (in parent reference coordinates) are given.  Because the
    interpolant is a polynomial and the sub-simplex map is affine,
    evaluating at the sub-element lattice is an exact restriction."""
    lattice = elem.nodes
    bary = np.column_stack([1.0 - lattice.sum(axis=1), lattice])
    parent_pts = bary @ np.asarray(sub_corner_coords, dtype=float)
    return interpolate(elem, nodal_values, parent_pts)

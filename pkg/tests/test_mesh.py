"""Structured simplicial background meshes."""

import numpy as np
import pytest

from cutmesh.errors import InvalidArgumentError
from cutmesh.mesh import build_structured_mesh, default_box
from cutmesh.reference_elements import ElementFamily, reference_element


@pytest.mark.parametrize("dim,n,order", [(2, 3, 1), (2, 4, 3), (3, 2, 1), (3, 3, 2)])
def test_counts_and_node_sharing(dim, n, order):
    mesh = build_structured_mesh(dim, n, order)
    cells = n ** dim
    per_cell = 2 if dim == 2 else 6
    assert mesh.n_elements == cells * per_cell
    assert mesh.nodes.shape == ((n * order + 1) ** dim, dim)
    elem = reference_element(mesh.family, order)
    assert mesh.elements.shape == (mesh.n_elements, elem.n_nodes)
    # every node is used by at least one element
    assert np.array_equal(np.unique(mesh.elements), np.arange(mesh.nodes.shape[0]))


def test_mesh_h_is_cell_edge():
    box = ((-1.3, 0.7), (-1.1, 0.9))
    mesh = build_structured_mesh(2, 8, 2, box=box)
    assert np.isclose(mesh.h, 0.25)
    assert mesh.box == box


@pytest.mark.parametrize("dim", [2, 3])
def test_elements_are_affine_images_of_reference(dim):
    order = 3
    mesh = build_structured_mesh(dim, 2, order)
    elem = reference_element(mesh.family, order)
    ref = elem.nodes
    bary = np.column_stack([1.0 - ref.sum(axis=1), ref])
    rng = np.random.default_rng(0)
    for e in rng.choice(mesh.n_elements, size=6, replace=False):
        coords = mesh.element_nodes(e)
        # affine placement: every node is the barycentric blend of corners
        assert np.allclose(coords, bary @ coords[: dim + 1], atol=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
def test_partition_of_box_volume(dim):
    n, order = 3, 2
    box = default_box(dim)
    mesh = build_structured_mesh(dim, n, order, box=box)
    fac = 2.0 if dim == 2 else 6.0
    total = 0.0
    for e in range(mesh.n_elements):
        corners = mesh.element_nodes(e)[: dim + 1]
        det = np.linalg.det(corners[1:] - corners[0])
        assert det > 0  # consistent positive orientation
        total += det / fac
    vol = np.prod([b[1] - b[0] for b in box])
    assert np.isclose(total, vol, rtol=1e-13)


def test_default_box_breaks_axis_symmetry():
    for dim in (2, 3):
        box = default_box(dim)
        assert len(box) == dim
        offsets = {round(-(b[0] + b[1]) / 2, 6) for b in box}
        assert len(offsets) == dim  # distinct per-axis offsets
        # contains the standard test radius with room to spare
        for lo, hi in box:
            assert lo < -0.7123 - 0.05 and hi > 0.7123 + 0.05


def test_corner_node_ids_cover_cell_lattice():
    mesh = build_structured_mesh(2, 4, 3)
    ids = mesh.corner_node_ids
    corners = mesh.nodes[ids]
    # corners live on the coarse n+1 lattice only
    assert len(ids) == 25
    lattice = np.unique(np.round((corners - mesh.nodes.min(0)) / mesh.h, 9))
    assert np.allclose(lattice, np.arange(5))


def test_invalid_arguments_rejected():
    with pytest.raises(InvalidArgumentError):
        build_structured_mesh(4, 2, 1)
    with pytest.raises(InvalidArgumentError):
        build_structured_mesh(2, 0, 1)
    with pytest.raises(InvalidArgumentError):
        build_structured_mesh(2, 2, 1, box=((1.0, -1.0), (-1.0, 1.0)))
    with pytest.raises(InvalidArgumentError):
        build_structured_mesh(2, 2, 1, box=((-1.0, 1.0),))

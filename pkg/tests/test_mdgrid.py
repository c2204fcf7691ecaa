"""Tests for mesh construction and the mixed-dimensional grid.

Content:
    - geometry of the reference simplices and the divergence-theorem closure
    - box mesher: cell counts, measures, lattice controls, refinement
    - liner embedding: topological split, mortar pairing, holes
    - MSH subset reader/writer round trip and malformed-input rejection
"""

from __future__ import annotations

import warnings

import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import reference_tet_mesh
from mdres.errors import (EmptyLiner, InvalidGeometry, NonConformingLiner,
                          ParseError)
from mdres.mdgrid import (LinerHole, LinerPanel, LinerSpec, SubdomainMesh,
                          build_box_mesh, build_line_mesh, compute_geometry,
                          divergence_defect, embed_liner, load_msh, save_msh)

"""Utility methods."""


def _check_invariants(mesh, measure=None):
    assert (mesh.cell_volumes > 0).all()
    if measure is not None:
        assert abs(mesh.cell_volumes.sum() - measure) <= 1e-10 * measure
    # every interior face has 2 incident cells, every boundary face 1
    interior = mesh.face_cells[:, 1] >= 0
    assert (mesh.face_cells[:, 0] >= 0).all()
    assert set(np.flatnonzero(~interior)) == set(mesh.boundary_faces())
    # per-cell closure of area-weighted outward normals, normalized by
    # the cell surface area
    assert (divergence_defect(mesh) <= 1e-12).all()


def _cell_components(mesh) -> int:
    interior = np.flatnonzero(mesh.face_cells[:, 1] >= 0)
    rows = mesh.face_cells[interior, 0]
    cols = mesh.face_cells[interior, 1]
    adj = sps.coo_matrix((np.ones(len(interior)), (rows, cols)),
                         shape=(mesh.n_cells, mesh.n_cells))
    n, _ = sps.csgraph.connected_components(adj, directed=False)
    return n


"""Reference-simplex geometry."""


def test_reference_tet_geometry():
    mesh = reference_tet_mesh()
    assert mesh.n_cells == 1
    assert mesh.n_faces == 4
    assert np.isclose(mesh.cell_volumes[0], 1.0 / 6.0, rtol=1e-14)
    assert np.allclose(mesh.cell_centers[0], 0.25, rtol=1e-14)
    _check_invariants(mesh, measure=1.0 / 6.0)


def test_unit_right_triangle_2d():
    nodes = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    mesh = SubdomainMesh(2, nodes, np.array([[0, 1, 2]]), geometry=True)
    assert np.isclose(mesh.cell_volumes[0], 0.5)
    assert np.isclose(sorted(mesh.face_areas), [1.0, 1.0, np.sqrt(2.0)]).all()
    _check_invariants(mesh, measure=0.5)


def test_degenerate_cell_rejected():
    nodes = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
                      [1.0, 1.0, 0.0]])
    from mdres.errors import DegenerateCell
    with pytest.raises(DegenerateCell):
        SubdomainMesh(3, nodes, np.array([[0, 1, 2, 3]]), geometry=True)


"""Box mesher."""


def test_unit_cube_single_hex_split():
    mesh = build_box_mesh((1.0, 1.0, 1.0), 1.0)
    assert mesh.n_cells == 6
    assert np.allclose(mesh.cell_volumes, 1.0 / 6.0)
    _check_invariants(mesh, measure=1.0)


def test_unit_cube_48_tets(unit_cube48):
    assert unit_cube48.n_cells == 48
    _check_invariants(unit_cube48, measure=1.0)


def test_tank_box_measure():
    mesh = build_box_mesh((0.52, 0.34, 0.40), 0.05)
    _check_invariants(mesh, measure=0.52 * 0.34 * 0.40)
    assert np.isclose(mesh.cell_volumes.sum(), 0.070720, rtol=1e-10)


def test_box_mesh_origin_offset():
    mesh = build_box_mesh((0.4, 0.2, 0.2), 0.1, origin=(1.0, 2.0, 3.0))
    assert np.allclose(mesh.nodes.min(axis=0), (1.0, 2.0, 3.0))
    assert np.allclose(mesh.nodes.max(axis=0), (1.4, 2.2, 3.2))
    _check_invariants(mesh, measure=0.4 * 0.2 * 0.2)


def test_box_mesh_required_planes():
    mesh = build_box_mesh((1.0, 1.0, 1.0), 0.3, required_planes={"x": [0.5]})
    assert np.isclose(mesh.nodes[:, 0], 0.5).any()


def test_box_mesh_refinement_region():
    region = ((0.4, 0.4, 0.4), (0.6, 0.6, 0.6), 0.05)
    mesh = build_box_mesh((1.0, 1.0, 1.0), 0.25, refinement_regions=[region])
    _check_invariants(mesh, measure=1.0)
    inside = np.all((mesh.cell_centers > 0.42) & (mesh.cell_centers < 0.58), axis=1)
    assert mesh.cell_diameters[inside].max() < 0.25
    assert mesh.n_cells > build_box_mesh((1.0, 1.0, 1.0), 0.25).n_cells


def test_box_mesh_rejects_nonpositive():
    with pytest.raises(InvalidGeometry):
        build_box_mesh((1.0, -1.0, 1.0), 0.5)
    with pytest.raises(InvalidGeometry):
        build_box_mesh((1.0, 1.0, 1.0), 0.0)


@settings(max_examples=12, deadline=None)
@given(nx=st.integers(1, 4), ny=st.integers(1, 4), nz=st.integers(1, 4),
       s=st.floats(0.05, 0.3))
def test_box_mesh_invariants_randomized(nx, ny, nz, s):
    extents = (nx * s, ny * s, nz * s)
    mesh = build_box_mesh(extents, s)
    _check_invariants(mesh, measure=float(np.prod(extents)))
    assert mesh.n_cells == 6 * nx * ny * nz


def test_line_mesh_partition():
    pts = np.array([[0.0, 0.0, 0.1], [0.0, 0.0, 0.0]])
    mesh = build_line_mesh(pts, 4)
    assert mesh.dim == 1
    assert mesh.n_cells == 4
    assert np.isclose(mesh.cell_volumes.sum(), 0.1, rtol=1e-14)
    tags = set(mesh.boundary_tags.values())
    assert tags == {"top", "tip"}


"""Liner embedding."""


def _tank_with_panel(radius_holes=(), cell=0.05, z=0.20):
    lo = (0.0, 0.0)
    hi = (0.52, 0.34)
    panel = LinerPanel(axis=2, position=z, lo=lo, hi=hi)
    holes = [LinerHole(center=c, radius=r) for c, r in radius_holes]
    spec = LinerSpec(panels=[panel], thickness=1e-3, sigma=1e-9, holes=holes)
    mesh = build_box_mesh((0.52, 0.34, 0.40), cell)
    return mesh, spec


def test_full_footprint_split():
    mesh, spec = _tank_with_panel()
    on_plane = np.isclose(mesh.face_centers[:, 2], 0.20).sum()
    grid = embed_liner(mesh, spec)
    assert grid.liner.n_cells == on_plane
    # the split makes the two halves topologically disconnected
    assert _cell_components(grid.bulk) == 2
    above = grid.bulk.cell_centers[:, 2] > 0.20
    interior = np.flatnonzero(grid.bulk.face_cells[:, 1] >= 0)
    pair = grid.bulk.face_cells[interior]
    assert not (above[pair[:, 0]] ^ above[pair[:, 1]]).any()


def test_conforming_mortar_pairing():
    mesh, spec = _tank_with_panel()
    grid = embed_liner(mesh, spec)
    for side in grid.mortar_liner:
        assert len(side) == grid.liner.n_cells
        fa = grid.bulk.face_areas[side.bulk_faces]
        fc = grid.bulk.face_centers[side.bulk_faces]
        assert np.allclose(fa, grid.liner.cell_volumes, rtol=1e-12, atol=0)
        assert np.allclose(fc, grid.liner.cell_centers, rtol=0, atol=1e-12)
        # each paired bulk face is exclusive to one side
        assert grid.bulk.face_cells[side.bulk_faces, 1].max() < 0
    sides = grid.mortar_liner
    assert not set(sides[0].bulk_faces) & set(sides[1].bulk_faces)


def test_hole_excludes_center_in_disk_faces():
    # pick one face centroid on the plane and punch a hole there; the
    # excluded set must be exactly the face-center-in-disk set, which at
    # radius 0.5 cell also captures the face's in-quad mate
    mesh = build_box_mesh((0.52, 0.34, 0.40), 0.05)
    on_plane = np.flatnonzero(np.isclose(mesh.face_centers[:, 2], 0.20))
    center = mesh.face_centers[on_plane[7]]
    for radius, n_excluded in ((0.5 * 0.05, 2), (0.4 * 0.05, 1)):
        spec = LinerSpec(panels=[LinerPanel(2, 0.20, (0.0, 0.0), (0.52, 0.34))],
                         thickness=1e-3, sigma=1e-9,
                         holes=[LinerHole(center=tuple(center), radius=radius)])
        grid = embed_liner(build_box_mesh((0.52, 0.34, 0.40), 0.05), spec)
        d = np.linalg.norm(mesh.face_centers[on_plane] - center, axis=1)
        assert (d <= radius).sum() == n_excluded
        assert grid.liner.n_cells == len(on_plane) - n_excluded
        assert np.isclose(grid.realized_hole_area,
                          mesh.face_areas[on_plane[d <= radius]].sum())
        # pierced liner stays connected across the plane
        assert _cell_components(grid.bulk) == 1


def test_nonconforming_panel_rejected():
    mesh, _ = _tank_with_panel()
    spec = LinerSpec(panels=[LinerPanel(2, 0.21, (0.0, 0.0), (0.52, 0.34))],
                     thickness=1e-3, sigma=1e-9)
    with pytest.raises(NonConformingLiner):
        embed_liner(mesh, spec)


def test_empty_panel_warns():
    mesh = build_box_mesh((0.52, 0.34, 0.40), 0.05)
    spec = LinerSpec(panels=[LinerPanel(2, 0.20, (0.9, 0.9), (1.0, 1.0))],
                     thickness=1e-3, sigma=1e-9)
    with pytest.warns(EmptyLiner):
        embed_liner(mesh, spec)


def test_box_liner_five_panels():
    """An open-top box decomposes into 5 panels forming one connected
    2D subdomain."""
    from mdres.scenario import box_panels
    # rim at the water surface, so walls plus bottom seal the inside off
    corner, size = (0.2, 0.10, 0.05), (0.2, 0.15, 0.15)
    panels = box_panels(corner, size)
    assert len(panels) == 5
    mesh = build_box_mesh((0.6, 0.35, 0.20), 0.05)
    grid = embed_liner(mesh, LinerSpec(panels=list(panels),
                                       thickness=1e-3, sigma=1e-9))
    assert _cell_components(grid.liner) == 1
    assert _cell_components(grid.bulk) == 2


"""MSH round trip."""


def test_msh_reference_tet(tmp_path):
    path = tmp_path / "tet.msh"
    save_msh(reference_tet_mesh(), path)
    mesh = load_msh(path)
    assert mesh.n_cells == 1
    assert np.isclose(mesh.cell_volumes[0], 1.0 / 6.0)


def test_msh_round_trip(tmp_path, unit_cube48):
    path = tmp_path / "cube.msh"
    save_msh(unit_cube48, path)
    back = load_msh(path)
    assert back.n_cells == unit_cube48.n_cells
    assert np.allclose(back.nodes, unit_cube48.nodes, atol=1e-15)
    assert (np.sort(back.cells, axis=1)
            == np.sort(unit_cube48.cells, axis=1)).all()
    assert np.allclose(back.cell_volumes, unit_cube48.cell_volumes, rtol=1e-12)


def test_msh_missing_node_reference(tmp_path):
    path = tmp_path / "bad.msh"
    good = (tmp_path / "tet.msh")
    save_msh(reference_tet_mesh(), good)
    text = good.read_text()
    path.write_text(text.replace(" 1 2 3 4", " 1 2 3 99"))
    with pytest.raises(ParseError):
        load_msh(path)


def test_msh_unsupported_version(tmp_path):
    path = tmp_path / "v2.msh"
    path.write_text("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
    with pytest.raises(ParseError):
        load_msh(path)

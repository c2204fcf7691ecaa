"""Tests for the spatial search structures and the electrode-bulk map.

Content:
    - alternating digital tree vs a brute-force bounding-box scan
    - exact tetrahedron-segment clipping against containment, sampling and
      rigid-motion arguments
    - segment-map construction and its length-partition invariant
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import REFERENCE_TET, reference_tet_mesh
from mdres.errors import DegenerateCell, UnmappedElectrode
from mdres.mdgrid import build_box_mesh
from mdres.spatial import adt_build, adt_candidates, map_electrode, tet_segment_clip


def _cell_boxes(mesh) -> np.ndarray:
    pts = mesh.nodes[mesh.cells]
    return np.stack([pts.min(axis=1), pts.max(axis=1)], axis=1)


"""Alternating digital tree."""


def test_adt_empty():
    tree = adt_build(np.zeros((0, 2, 3)))
    assert tree.n_items == 0
    assert adt_candidates(tree, ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))).size == 0


def test_adt_single_item():
    tree = adt_build(reference_tet_mesh())
    assert tree.n_items == 1
    hit = adt_candidates(tree, ((0.2, 0.2, 0.2), (0.3, 0.3, 0.3)))
    assert set(hit) == {0}
    miss = adt_candidates(tree, ((2.0, 2.0, 2.0), (3.0, 3.0, 3.0)))
    assert miss.size == 0


def test_adt_box_containing_domain(unit_cube48):
    tree = adt_build(unit_cube48)
    hit = adt_candidates(tree, ((-1.0, -1.0, -1.0), (2.0, 2.0, 2.0)))
    assert set(hit) == set(range(unit_cube48.n_cells))


def test_adt_equals_brute_force_on_mesh(unit_cube48):
    """The candidate set must equal the brute-force overlap scan: no false
    negatives by the tree-region argument, no false positives because exact
    box overlap is re-checked."""
    tree = adt_build(unit_cube48)
    boxes = _cell_boxes(unit_cube48)
    rng = np.random.default_rng(7)
    for _ in range(1200):
        lo = rng.uniform(-0.2, 1.0, 3)
        hi = lo + rng.uniform(0.0, 0.6, 3)
        query = np.stack([lo, hi])
        expected = oracles.brute_force_box_overlap(boxes, query)
        assert set(adt_candidates(tree, query).tolist()) == expected


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_adt_equals_brute_force_random_boxes(seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(0.0, 1.0, (40, 3))
    boxes = np.stack([lo, lo + rng.uniform(0.0, 0.5, (40, 3))], axis=1)
    tree = adt_build(boxes)
    qlo = rng.uniform(-0.2, 1.2, 3)
    query = np.stack([qlo, qlo + rng.uniform(0.0, 0.8, 3)])
    expected = oracles.brute_force_box_overlap(boxes, query)
    assert set(adt_candidates(tree, query).tolist()) == expected


"""Tetrahedron-segment clipping."""


def test_clip_contained_segment():
    seg = np.array([[0.1, 0.1, 0.1], [0.2, 0.1, 0.1]])
    assert tet_segment_clip(REFERENCE_TET, seg) == pytest.approx(0.1, rel=1e-13)


def test_clip_disjoint_segment():
    seg = np.array([[0.0, 0.0, 2.0], [1.0, 1.0, 2.0]])
    assert tet_segment_clip(REFERENCE_TET, seg) == 0.0


def test_clip_crossing_segment_vs_sampling():
    seg = np.array([[-1.0, 0.25, 0.25], [2.0, 0.25, 0.25]])
    length = tet_segment_clip(REFERENCE_TET, seg)
    sampled = oracles.segment_in_tet_fraction(REFERENCE_TET, seg)
    assert length == pytest.approx(sampled, abs=1e-4)
    # the same number from half-space arithmetic: enters at x = 0, leaves
    # where x + 0.25 + 0.25 = 1; the clip tolerance is 1e-12 x diameter
    assert length == pytest.approx(0.5, abs=1e-10)


def test_clip_reversal_invariant():
    seg = np.array([[-0.3, 0.2, 0.1], [1.4, 0.3, 0.4]])
    a = tet_segment_clip(REFERENCE_TET, seg)
    b = tet_segment_clip(REFERENCE_TET, seg[::-1])
    assert a == pytest.approx(b, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_clip_rigid_motion_invariant(seed):
    rng = np.random.default_rng(seed)
    seg = rng.uniform(-0.5, 1.5, (2, 3))
    base = tet_segment_clip(REFERENCE_TET, seg)
    # random rotation (QR of a Gaussian matrix) plus translation
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    shift = rng.uniform(-2.0, 2.0, 3)
    moved = tet_segment_clip(REFERENCE_TET @ q.T + shift, seg @ q.T + shift)
    assert moved == pytest.approx(base, abs=1e-12)


def test_clip_degenerate_tet():
    flat = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                     [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    with pytest.raises(DegenerateCell):
        tet_segment_clip(flat, np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]))


"""Electrode map."""


def test_map_single_cell_entry(unit_cube48):
    # a 5 mm stick around a cell centroid, pointed at one vertex, stays
    # strictly inside that cell
    c = unit_cube48.cell_centers[0]
    v = unit_cube48.nodes[unit_cube48.cells[0, 0]]
    unit = (v - c) / np.linalg.norm(v - c)
    seg = np.stack([c, c + 0.005 * unit])
    emap = map_electrode(seg, unit_cube48)
    assert len(emap.entries) == 1
    cell, bulk, length = emap.entries[0]
    assert bulk == 0
    assert length == pytest.approx(0.005, rel=1e-12)


def test_map_two_cell_crossing(unit_cube48):
    interior = np.flatnonzero(unit_cube48.face_cells[:, 1] >= 0)
    k, l = unit_cube48.face_cells[interior[0]]
    seg = np.stack([unit_cube48.cell_centers[k], unit_cube48.cell_centers[l]])
    emap = map_electrode(seg, unit_cube48)
    assert len(emap.entries) == 2
    assert {e[1] for e in emap.entries} == {k, l}
    total = sum(e[2] for e in emap.entries)
    assert total == pytest.approx(np.linalg.norm(seg[1] - seg[0]), rel=1e-10)


def test_map_outside_domain(unit_cube48):
    seg = np.array([[0.5, 0.5, 1.5], [0.5, 0.5, 2.0]])
    with pytest.raises(UnmappedElectrode):
        map_electrode(seg, unit_cube48)


def test_map_partially_outside(unit_cube48):
    seg = np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 1.5]])
    with pytest.raises(UnmappedElectrode):
        map_electrode(seg, unit_cube48)


@settings(max_examples=25, deadline=None)
@given(x=st.floats(0.05, 0.45), y=st.floats(0.05, 0.25),
       depth=st.floats(0.002, 0.08))
def test_map_length_partition(x, y, depth):
    """Any vertical electrode inside the tank is partitioned with no length
    lost, whatever cells it threads."""
    mesh = test_map_length_partition.mesh
    seg = np.array([[x, y, 0.12], [x, y, 0.12 - depth]])
    emap = map_electrode(seg, mesh, adt=test_map_length_partition.tree)
    total = sum(e[2] for e in emap.entries)
    assert total == pytest.approx(depth, rel=1e-10)
    assert all(e[2] > 0 for e in emap.entries)


test_map_length_partition.mesh = build_box_mesh((0.5, 0.3, 0.12), 0.03)
test_map_length_partition.tree = adt_build(test_map_length_partition.mesh)


def test_map_polyline_mesh_input(unit_cube48):
    from mdres.mdgrid import build_line_mesh
    line = build_line_mesh(np.array([[0.5, 0.5, 0.9], [0.5, 0.5, 0.7]]), 4)
    emap = map_electrode(line, unit_cube48)
    total = sum(e[2] for e in emap.entries)
    assert total == pytest.approx(0.2, rel=1e-10)
    # per-segment pieces also partition each 1D cell
    for s in range(4):
        part = sum(e[2] for e in emap.entries if e[0] == s)
        assert part == pytest.approx(0.05, rel=1e-10)

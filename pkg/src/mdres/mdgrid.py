"""Simplicial subdomain meshes and the mixed-dimensional grid.

A SubdomainMesh holds a simplicial mesh of dimension 1, 2 or 3 whose nodes
are always embedded in R^3, so line and surface subdomains carry full 3D
coordinates. The mixed-dimensional grid is produced by splitting a 3D mesh
along liner surfaces (duplicating faces, never nodes) and collecting the
2D liner subdomain plus the mortar side maps that pair each liner cell
with its two bulk faces.

Conventions:
  - cells are (dim+1)-node simplices, faces are dim-node simplices;
  - ``cell_faces`` is a (n_faces x n_cells) signed incidence matrix,
    +1 where the stored face normal points out of the cell;
  - face normals are unit vectors; for 2D subdomains they are in-plane
    edge normals of the positively incident cell, for 1D subdomains the
    outward tangent at the endpoint;
  - boundary tags map face id -> string tag.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .errors import (
    DegenerateCell,
    EmptyLiner,
    InvalidGeometry,
    NonConformingLiner,
    ParseError,
)

__all__ = [
    "SubdomainMesh",
    "LinerPanel",
    "LinerHole",
    "LinerSpec",
    "LinerSideMap",
    "MixedDimGrid",
    "build_box_mesh",
    "build_line_mesh",
    "compute_geometry",
    "embed_liner",
    "load_msh",
    "save_msh",
]

# Relative tolerance for "point lies on plane" tests during splitting.
_PLANE_TOL = 1e-9


class SubdomainMesh:
    """Simplicial mesh of dimension 1, 2 or 3 embedded in R^3.

    Construction builds the face connectivity; call :func:`compute_geometry`
    (or pass ``geometry=True``) to populate measures, centers and normals.
    """

    def __init__(self, dim: int, nodes: np.ndarray, cells: np.ndarray,
                 boundary_tags: dict[int, str] | None = None,
                 geometry: bool = False):
        if dim not in (1, 2, 3):
            raise InvalidGeometry(f"unsupported mesh dimension {dim}")
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise InvalidGeometry("nodes must be an (n, 3) coordinate array")
        cells = np.asarray(cells, dtype=np.int64)
        if cells.ndim != 2 or cells.shape[1] != dim + 1:
            raise InvalidGeometry(f"cells must be (n, {dim + 1}) node tuples")
        if cells.size and (cells.min() < 0 or cells.max() >= len(nodes)):
            raise InvalidGeometry("cell references a node id outside the node array")

        self.dim = dim
        self.nodes = nodes
        self.cells = cells
        self.boundary_tags: dict[int, str] = dict(boundary_tags or {})
        self.cell_tags: np.ndarray | None = None

        self._build_faces()

        # geometry fields, populated by compute_geometry
        self.cell_volumes: np.ndarray | None = None
        self.cell_centers: np.ndarray | None = None
        self.cell_diameters: np.ndarray | None = None
        self.face_areas: np.ndarray | None = None
        self.face_centers: np.ndarray | None = None
        self.face_normals: np.ndarray | None = None
        self.face_normals_minus: np.ndarray | None = None
        self.cells_fnormal: np.ndarray | None = None
        self.cell_basis: np.ndarray | None = None
        if geometry:
            compute_geometry(self)

    # -- connectivity -------------------------------------------------

    def _build_faces(self) -> None:
        dim, cells = self.dim, self.cells
        n_cells = len(cells)
        nf_per_cell = dim + 1

        # local face j omits local node j
        local = [[k for k in range(dim + 1) if k != j] for j in range(dim + 1)]
        all_faces = np.concatenate([cells[:, lf] for lf in local], axis=0)
        owner_cell = np.tile(np.arange(n_cells, dtype=np.int64), nf_per_cell)

        key = np.sort(all_faces, axis=1)
        faces, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        n_faces = len(faces)

        # first incident cell (in cell-major order) gets orientation +1
        order = np.argsort(inverse, kind="stable")
        fid_sorted = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = fid_sorted[1:] != fid_sorted[:-1]
        counts = np.bincount(inverse, minlength=n_faces)
        if counts.size and counts.max() > 2:
            raise InvalidGeometry("non-manifold connectivity: face shared by more than 2 cells")

        sign_sorted = np.where(first, 1, -1).astype(np.int8)
        face_cells = -np.ones((n_faces, 2), dtype=np.int64)
        cell_of = owner_cell[order]
        face_cells[fid_sorted[first], 0] = cell_of[first]
        second = ~first
        face_cells[fid_sorted[second], 1] = cell_of[second]

        sign = np.empty(len(order), dtype=np.int8)
        sign[order] = sign_sorted

        self.faces = faces
        self.face_cells = face_cells
        self.cells_fid = inverse.reshape(nf_per_cell, n_cells).T.copy()
        self.cells_fsign = sign.reshape(nf_per_cell, n_cells).T.copy()
        self.cell_faces = sps.csc_matrix(
            (sign.astype(float),
             (inverse, owner_cell)),
            shape=(n_faces, n_cells),
        )

    # -- simple accessors ---------------------------------------------

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def boundary_faces(self) -> np.ndarray:
        """Ids of faces with exactly one incident cell."""
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    def tagged_faces(self, tag: str) -> np.ndarray:
        """Ids of faces carrying a given boundary tag."""
        return np.array(sorted(f for f, t in self.boundary_tags.items() if t == tag),
                        dtype=np.int64)

    def divergence(self) -> sps.csr_matrix:
        """Signed cell-by-face incidence: (div q)_K = sum of outward fluxes."""
        return self.cell_faces.T.tocsr()


# ---------------------------------------------------------------------------
# geometry


def _triangle_normals(nodes: np.ndarray, tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    cr = np.cross(b - a, c - a)
    area2 = np.linalg.norm(cr, axis=1)
    return cr, area2


def compute_geometry(mesh: SubdomainMesh) -> SubdomainMesh:
    """Populate cell/face measures, centers, normals and local bases.

    Raises DegenerateCell when a cell has (numerically) zero measure.
    Normal orientation is purely geometric: the stored face normal points
    out of the positively incident cell, and ``cells_fnormal`` holds each
    cell's own outward normals, which also handles 2D subdomains folded
    across panel junctions.
    """
    dim, nodes, cells, faces = mesh.dim, mesh.nodes, mesh.cells, mesh.faces
    n_cells, n_faces = mesh.n_cells, mesh.n_faces

    cell_pts = nodes[cells]                      # (n_cells, dim+1, 3)
    mesh.cell_centers = cell_pts.mean(axis=1)

    diam = np.zeros(n_cells)
    for i in range(dim + 1):
        for j in range(i + 1, dim + 1):
            d = np.linalg.norm(cell_pts[:, i] - cell_pts[:, j], axis=1)
            diam = np.maximum(diam, d)
    mesh.cell_diameters = diam

    if dim == 3:
        e1 = cell_pts[:, 1] - cell_pts[:, 0]
        e2 = cell_pts[:, 2] - cell_pts[:, 0]
        e3 = cell_pts[:, 3] - cell_pts[:, 0]
        det = np.einsum("ij,ij->i", np.cross(e1, e2), e3)
        vol = np.abs(det) / 6.0
    elif dim == 2:
        cr, area2 = _triangle_normals(nodes, cells)
        vol = 0.5 * area2
    else:
        vol = np.linalg.norm(cell_pts[:, 1] - cell_pts[:, 0], axis=1)
    bad = np.flatnonzero(vol <= 1e-12 * diam ** dim)
    if bad.size:
        raise DegenerateCell(int(bad[0]), f"measure {vol[bad[0]]:.3e}")
    mesh.cell_volumes = vol

    face_pts = nodes[faces]                      # (n_faces, dim, 3)
    mesh.face_centers = face_pts.mean(axis=1)
    if dim == 3:
        cr = np.cross(face_pts[:, 1] - face_pts[:, 0], face_pts[:, 2] - face_pts[:, 0])
        nrm2 = np.linalg.norm(cr, axis=1)
        mesh.face_areas = 0.5 * nrm2
        raw_normals = cr / nrm2[:, None]
    elif dim == 2:
        edge = face_pts[:, 1] - face_pts[:, 0]
        mesh.face_areas = np.linalg.norm(edge, axis=1)
        raw_normals = None                       # per-cell, built below
    else:
        mesh.face_areas = np.ones(n_faces)
        raw_normals = None

    # local orthonormal basis of each cell's affine hull
    if dim == 3:
        mesh.cell_basis = None
    elif dim == 2:
        t1 = cell_pts[:, 1] - cell_pts[:, 0]
        t1 /= np.linalg.norm(t1, axis=1)[:, None]
        nrm = np.cross(cell_pts[:, 1] - cell_pts[:, 0], cell_pts[:, 2] - cell_pts[:, 0])
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        t2 = np.cross(nrm, t1)
        mesh.cell_basis = np.stack([t1, t2], axis=1)
    else:
        t = cell_pts[:, 1] - cell_pts[:, 0]
        t /= np.linalg.norm(t, axis=1)[:, None]
        mesh.cell_basis = t[:, None, :]

    # outward normals per (cell, local face), from the cell's own geometry
    cells_fnormal = np.zeros((n_cells, dim + 1, 3))
    for j in range(dim + 1):
        fid = mesh.cells_fid[:, j]
        fc = mesh.face_centers[fid]
        out_dir = fc - mesh.cell_centers
        if dim == 3:
            n = raw_normals[fid].copy()
        elif dim == 2:
            edge = nodes[faces[fid, 1]] - nodes[faces[fid, 0]]
            cell_nrm = np.cross(cell_pts[:, 1] - cell_pts[:, 0],
                                cell_pts[:, 2] - cell_pts[:, 0])
            n = np.cross(edge, cell_nrm)
            n /= np.linalg.norm(n, axis=1)[:, None]
        else:
            n = out_dir / np.linalg.norm(out_dir, axis=1)[:, None]
        flip = np.einsum("ij,ij->i", n, out_dir) < 0
        n[flip] *= -1.0
        cells_fnormal[:, j, :] = n
    mesh.cells_fnormal = cells_fnormal

    # face normals oriented out of the positively incident cell
    face_normals = np.zeros((n_faces, 3))
    face_normals_minus = np.zeros((n_faces, 3))
    for j in range(dim + 1):
        fid = mesh.cells_fid[:, j]
        plus = mesh.cells_fsign[:, j] > 0
        face_normals[fid[plus]] = cells_fnormal[plus, j, :]
        face_normals_minus[fid[~plus]] = cells_fnormal[~plus, j, :]
    mesh.face_normals = face_normals
    mesh.face_normals_minus = face_normals_minus
    return mesh


def divergence_defect(mesh: SubdomainMesh) -> np.ndarray:
    """Per-cell |sum of area * outward normal| / (cell surface area)."""
    areas = mesh.face_areas[mesh.cells_fid]                  # (n_cells, dim+1)
    vec = np.einsum("cf,cfk->ck", areas, mesh.cells_fnormal)
    return np.linalg.norm(vec, axis=1) / areas.sum(axis=1)


# ---------------------------------------------------------------------------
# liner specification and the mixed-dimensional grid


@dataclass
class LinerPanel:
    """Axis-aligned planar rectangle: fixed coordinate ``axis`` = ``position``,
    spanning ``lo``..``hi`` in the two remaining axes (in increasing axis order)."""

    axis: int
    position: float
    lo: tuple[float, float]
    hi: tuple[float, float]

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise InvalidGeometry("panel axis must be 0, 1 or 2")
        if not (self.lo[0] < self.hi[0] and self.lo[1] < self.hi[1]):
            raise InvalidGeometry("panel extents must be non-empty")


@dataclass
class LinerHole:
    """Disk lying on a panel, given by center (3D, on the panel plane) and radius."""

    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidGeometry("hole radius must be positive")


@dataclass
class LinerSpec:
    """Geometry and material of the reduced liner: panels, holes, thickness
    (m) and normal conductivity (S/m)."""

    panels: list[LinerPanel]
    thickness: float
    sigma: float
    holes: list[LinerHole] = field(default_factory=list)

    def __post_init__(self):
        if self.thickness <= 0:
            raise InvalidGeometry("liner thickness must be positive")
        if self.sigma <= 0:
            raise InvalidGeometry("liner conductivity must be positive")
        for h in self.holes:
            if not any(self._on_panel(p, h.center) for p in self.panels):
                raise InvalidGeometry(f"hole at {h.center} lies on no panel")

    @staticmethod
    def _on_panel(p: LinerPanel, center: tuple[float, float, float]) -> bool:
        other = [k for k in range(3) if k != p.axis]
        scale = max(abs(p.position), p.hi[0] - p.lo[0], p.hi[1] - p.lo[1], 1.0)
        if abs(center[p.axis] - p.position) > _PLANE_TOL * scale:
            return False
        u, v = center[other[0]], center[other[1]]
        return (p.lo[0] - _PLANE_TOL <= u <= p.hi[0] + _PLANE_TOL
                and p.lo[1] - _PLANE_TOL <= v <= p.hi[1] + _PLANE_TOL)


@dataclass
class LinerSideMap:
    """One side of the liner mortar: liner cell i pairs with bulk face
    ``bulk_faces[i]`` whose only incident cell is ``bulk_cells[i]``."""

    bulk_faces: np.ndarray
    bulk_cells: np.ndarray

    def __len__(self) -> int:
        return len(self.bulk_faces)


@dataclass
class MixedDimGrid:
    """The 3D bulk split along the liner, the 2D liner subdomain, the 1D
    electrode subdomains, and the maps joining them."""

    bulk: SubdomainMesh
    liner: SubdomainMesh | None = None
    electrodes: list[SubdomainMesh] = field(default_factory=list)
    mortar_liner: tuple[LinerSideMap, LinerSideMap] | None = None
    mortar_electrodes: list = field(default_factory=list)   # ElectrodeSegmentMap
    liner_spec: LinerSpec | None = None
    realized_hole_area: float = 0.0

    def subdomains(self) -> dict[str, SubdomainMesh]:
        out = {"bulk": self.bulk}
        if self.liner is not None:
            out["liner"] = self.liner
        for i, e in enumerate(self.electrodes):
            out[f"electrode{i}"] = e
        return out

    def add_electrode(self, mesh1d: SubdomainMesh, segment_map) -> None:
        if mesh1d.dim != 1:
            raise InvalidGeometry("electrode subdomain must be 1D")
        self.electrodes.append(mesh1d)
        self.mortar_electrodes.append(segment_map)


# ---------------------------------------------------------------------------
# meshers


def _axis_breakpoints(length: float, base: float,
                      spans: list[tuple[float, float, float]],
                      planes: list[float]) -> np.ndarray:
    """1D breakpoints on [0, length]: mandatory planes, per-span target sizes,
    a one-layer geometric-mean transition band at fine/coarse joints, and
    ceil-based equal subdivision in between."""
    tol = 1e-12 * max(length, 1.0)
    mandatory = [0.0, length]
    for lo, hi, _ in spans:
        for p in (lo, hi):
            if tol < p < length - tol:
                mandatory.append(p)
    for p in planes:
        if p < -tol or p > length + tol:
            raise InvalidGeometry(f"required plane {p} outside [0, {length}]")
        if tol < p < length - tol:
            mandatory.append(p)
    mandatory = sorted(mandatory)
    uniq = [mandatory[0]]
    for p in mandatory[1:]:
        if p - uniq[-1] > tol:
            uniq.append(p)

    def span_size(lo: float, hi: float) -> float:
        size = base
        for slo, shi, s in spans:
            if slo - tol <= lo and hi <= shi + tol:
                size = min(size, s)
        return size

    intervals = [(uniq[i], uniq[i + 1], span_size(uniq[i], uniq[i + 1]))
                 for i in range(len(uniq) - 1)]

    # one-layer transition where neighbouring target sizes jump by > 2.5x
    refined: list[tuple[float, float, float]] = []
    for i, (lo, hi, size) in enumerate(intervals):
        left = intervals[i - 1][2] if i > 0 else size
        right = intervals[i + 1][2] if i + 1 < len(intervals) else size
        pieces = [(lo, hi, size)]
        for nb, at_start in ((left, True), (right, False)):
            if nb < size / 2.5:
                w = float(np.sqrt(nb * size))
                s0, s1, _ = pieces[0] if at_start else pieces[-1]
                if s1 - s0 > 2 * w:
                    if at_start:
                        pieces[0] = (s0 + w, s1, size)
                        pieces.insert(0, (s0, s0 + w, w))
                    else:
                        pieces[-1] = (s0, s1 - w, size)
                        pieces.append((s1 - w, s1, w))
        refined.extend(pieces)

    pts = [0.0]
    for lo, hi, size in refined:
        n = max(1, int(np.ceil((hi - lo) / size - 1e-9)))
        pts.extend(np.linspace(lo, hi, n + 1)[1:].tolist())
    return np.array(pts)


# the six Kuhn tetrahedra of a hexahedron, corners bit-coded dx + 2dy + 4dz,
# node order fixed so every tetrahedron has positive orientation
_KUHN_TETS = np.array([
    [0, 1, 3, 7],
    [0, 1, 7, 5],
    [0, 2, 7, 3],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 7, 6],
], dtype=np.int64)


def build_box_mesh(extents: tuple[float, float, float], cell_size: float,
                   refinement_regions: list[tuple] = (),
                   required_planes: dict[str, list[float]] | None = None,
                   origin: tuple[float, float, float] = (0.0, 0.0, 0.0),
                   axis_bands: dict[str, list[tuple]] | None = None
                   ) -> SubdomainMesh:
    """Tensor-product hexahedral lattice on origin + [0, extents], graded
    toward the refinement regions, each hexahedron split into 6 tetrahedra
    with globally consistent diagonals.

    refinement_regions: list of ((lo3), (hi3), size) boxes in absolute
    coordinates; their axis projections are refined to the given size,
    clipped to the box (a region that misses the box is ignored, so one
    region list can serve differently truncated domains). required_planes:
    optional {"x"|"y"|"z": [absolute positions]} forced into the lattice
    (used to make liner panels and electrode columns conform). axis_bands:
    optional {"x"|"y"|"z": [(lo, hi, size)]} refining a single axis only,
    same clipping rules; this is how slab refinement (a fine z band) is
    expressed without dragging the other axes along.
    """
    extents = tuple(float(e) for e in extents)
    origin = tuple(float(o) for o in origin)
    if len(extents) != 3 or min(extents) <= 0:
        raise InvalidGeometry("extents must be three positive lengths")
    if cell_size <= 0:
        raise InvalidGeometry("cell_size must be positive")
    planes = {"x": [], "y": [], "z": []}
    for k, v in (required_planes or {}).items():
        if k not in planes:
            raise InvalidGeometry(f"unknown plane axis {k!r}")
        planes[k] = [float(p) - origin["xyz".index(k)] for p in v]

    spans: dict[int, list[tuple[float, float, float]]] = {0: [], 1: [], 2: []}
    for lo, hi, size in refinement_regions:
        if size <= 0:
            raise InvalidGeometry("refinement size must be positive")
        clipped = []
        for ax in range(3):
            a, b = float(lo[ax]) - origin[ax], float(hi[ax]) - origin[ax]
            if a >= b:
                raise InvalidGeometry("refinement region is empty")
            a, b = max(a, 0.0), min(b, extents[ax])
            if a >= b - 1e-12:
                break
            clipped.append((a, b, float(size)))
        else:
            for ax in range(3):
                spans[ax].append(clipped[ax])
    for k, bands in (axis_bands or {}).items():
        if k not in planes:
            raise InvalidGeometry(f"unknown band axis {k!r}")
        ax = "xyz".index(k)
        for lo, hi, size in bands:
            if size <= 0:
                raise InvalidGeometry("band size must be positive")
            a, b = float(lo) - origin[ax], float(hi) - origin[ax]
            if a >= b:
                raise InvalidGeometry("band is empty")
            a, b = max(a, 0.0), min(b, extents[ax])
            if a < b - 1e-12:
                spans[ax].append((a, b, float(size)))

    for ax in range(3):                   # drop planes outside the box
        tol = 1e-12 * max(extents[ax], 1.0)
        planes["xyz"[ax]] = [p for p in planes["xyz"[ax]]
                             if -tol <= p <= extents[ax] + tol]

    axes = [_axis_breakpoints(extents[ax], cell_size, spans[ax],
                              planes["xyz"[ax]]) + origin[ax] for ax in range(3)]
    nx, ny, nz = (len(a) for a in axes)

    X, Y, Z = np.meshgrid(axes[0], axes[1], axes[2], indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def nid(ix, iy, iz):
        return (ix * ny + iy) * nz + iz

    ix, iy, iz = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1),
                             np.arange(nz - 1), indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    corners = np.stack([nid(ix + (b & 1), iy + ((b >> 1) & 1), iz + ((b >> 2) & 1))
                        for b in range(8)], axis=1)           # (n_hex, 8)
    cells = corners[:, _KUHN_TETS].reshape(-1, 4)

    mesh = SubdomainMesh(3, nodes, cells)
    compute_geometry(mesh)

    # tag the six box sides
    bf = mesh.boundary_faces()
    fc = mesh.face_centers[bf]
    names = (("xmin", 0, origin[0]), ("xmax", 0, origin[0] + extents[0]),
             ("ymin", 1, origin[1]), ("ymax", 1, origin[1] + extents[1]),
             ("zmin", 2, origin[2]), ("zmax", 2, origin[2] + extents[2]))
    scale = max(extents)
    for name, ax, pos in names:
        on = np.abs(fc[:, ax] - pos) <= _PLANE_TOL * scale
        for f in bf[on]:
            mesh.boundary_tags[int(f)] = name
    return mesh


def build_line_mesh(points: np.ndarray, n_cells: int,
                    tags: tuple[str, str] = ("top", "tip")) -> SubdomainMesh:
    """1D mesh along a polyline, subdivided into ``n_cells`` cells of equal
    arclength. The endpoint faces are tagged ``tags[0]`` (first point) and
    ``tags[1]`` (last point)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) < 2:
        raise InvalidGeometry("polyline needs at least two points")
    if n_cells < 1:
        raise InvalidGeometry("need at least one cell")
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    if np.any(seg <= 0):
        raise InvalidGeometry("polyline has a zero-length segment")
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.linspace(0.0, arc[-1], n_cells + 1)
    nodes = np.empty((n_cells + 1, 3))
    for k in range(3):
        nodes[:, k] = np.interp(s, arc, points[:, k])
    cells = np.stack([np.arange(n_cells), np.arange(1, n_cells + 1)], axis=1)
    mesh = SubdomainMesh(1, nodes, cells)
    compute_geometry(mesh)
    first = int(np.flatnonzero((mesh.faces == 0).all(axis=1))[0])
    last = int(np.flatnonzero((mesh.faces == n_cells).all(axis=1))[0])
    mesh.boundary_tags[first] = tags[0]
    mesh.boundary_tags[last] = tags[1]
    return mesh


# ---------------------------------------------------------------------------
# liner embedding


def _panel_faces(mesh: SubdomainMesh, panel: LinerPanel, scale: float) -> np.ndarray:
    ax = panel.axis
    tol = _PLANE_TOL * scale
    if not np.any(np.abs(mesh.nodes[:, ax] - panel.position) <= tol):
        raise NonConformingLiner(
            f"panel plane {'xyz'[ax]} = {panel.position} does not coincide "
            f"with a mesh lattice plane")
    on_plane = np.abs(mesh.nodes[mesh.faces][:, :, ax] - panel.position).max(axis=1) <= tol
    other = [k for k in range(3) if k != ax]
    fc = mesh.face_centers
    inside = on_plane.copy()
    for k, (lo, hi) in zip(other, zip(panel.lo, panel.hi)):
        inside &= (fc[:, k] >= lo - tol) & (fc[:, k] <= hi + tol)
    return np.flatnonzero(inside)


def embed_liner(mesh3: SubdomainMesh, liner: LinerSpec) -> MixedDimGrid:
    """Split the 3D mesh along the liner panels and extract the 2D liner.

    Faces on a panel and outside every hole are duplicated: the original
    face keeps the cell on its positive side, the copy takes the other
    cell, so the two sides are no longer adjacent through them. One liner
    cell is created per split face; nodes are never duplicated. A face is
    inside a hole iff its center is within the disk radius.
    """
    if mesh3.dim != 3:
        raise InvalidGeometry("liner embedding needs a 3D bulk mesh")
    if mesh3.cell_volumes is None:
        compute_geometry(mesh3)
    scale = float(np.abs(mesh3.nodes).max() or 1.0)

    selected: list[int] = []
    hole_area = 0.0
    for panel in liner.panels:
        fids = _panel_faces(mesh3, panel, scale)
        if fids.size == 0:
            warnings.warn(f"liner panel at {'xyz'[panel.axis]} = {panel.position} "
                          "selects no faces", EmptyLiner, stacklevel=2)
            continue
        keep = np.ones(len(fids), dtype=bool)
        for hole in liner.holes:
            d = np.linalg.norm(mesh3.face_centers[fids]
                               - np.asarray(hole.center), axis=1)
            in_hole = d <= hole.radius
            hole_area += float(mesh3.face_areas[fids[in_hole & keep]].sum())
            keep &= ~in_hole
        fids = fids[keep]
        interior = mesh3.face_cells[fids, 1] >= 0
        if not interior.all():
            warnings.warn("liner panel faces on the domain boundary are skipped",
                          EmptyLiner, stacklevel=2)
        selected.extend(int(f) for f in fids[interior])

    selected = sorted(set(selected))
    if not selected:
        warnings.warn("liner selects no faces at all", EmptyLiner, stacklevel=2)
        return MixedDimGrid(bulk=mesh3, liner_spec=liner, realized_hole_area=hole_area)

    sel = np.array(selected, dtype=np.int64)
    n_old = mesh3.n_faces
    n_new = len(sel)
    new_ids = np.arange(n_old, n_old + n_new, dtype=np.int64)

    minus_cells = mesh3.face_cells[sel, 1].copy()

    # extend face arrays with the duplicates
    mesh3.faces = np.vstack([mesh3.faces, mesh3.faces[sel]])
    mesh3.face_areas = np.concatenate([mesh3.face_areas, mesh3.face_areas[sel]])
    mesh3.face_centers = np.vstack([mesh3.face_centers, mesh3.face_centers[sel]])
    mesh3.face_normals = np.vstack([mesh3.face_normals, -mesh3.face_normals[sel]])
    mesh3.face_normals_minus = np.vstack([mesh3.face_normals_minus,
                                          np.zeros((n_new, 3))])

    # reassign the negative-side cells to the duplicated faces
    old_of = {int(f): int(nf) for f, nf in zip(sel, new_ids)}
    for c in minus_cells:
        row = mesh3.cells_fid[c]
        for j in range(4):
            f = int(row[j])
            if f in old_of and mesh3.cells_fsign[c, j] < 0:
                mesh3.cells_fid[c, j] = old_of[f]
                mesh3.cells_fsign[c, j] = 1
    fc_new = -np.ones((n_old + n_new, 2), dtype=np.int64)
    fc_new[:n_old] = mesh3.face_cells
    fc_new[sel, 1] = -1
    fc_new[new_ids, 0] = minus_cells
    mesh3.face_cells = fc_new
    mesh3.face_normals_minus[sel] = 0.0

    rows = mesh3.cells_fid.ravel()
    cols = np.repeat(np.arange(mesh3.n_cells, dtype=np.int64), 4)
    vals = mesh3.cells_fsign.ravel().astype(float)
    mesh3.cell_faces = sps.csc_matrix((vals, (rows, cols)),
                                      shape=(mesh3.n_faces, mesh3.n_cells))

    for f, nf in zip(sel, new_ids):
        mesh3.boundary_tags[int(f)] = "liner_side0"
        mesh3.boundary_tags[int(nf)] = "liner_side1"

    # liner subdomain: one triangle per split face, compacted node set
    tris = mesh3.faces[sel]
    used = np.unique(tris)
    remap = -np.ones(mesh3.n_nodes, dtype=np.int64)
    remap[used] = np.arange(len(used))
    liner_mesh = SubdomainMesh(2, mesh3.nodes[used], remap[tris])
    compute_geometry(liner_mesh)

    side0 = LinerSideMap(bulk_faces=sel.copy(),
                         bulk_cells=mesh3.face_cells[sel, 0].copy())
    side1 = LinerSideMap(bulk_faces=new_ids.copy(), bulk_cells=minus_cells.copy())

    # conforming-coupling invariant: paired geometry matches exactly
    if not np.allclose(liner_mesh.cell_volumes, mesh3.face_areas[sel], rtol=1e-12):
        raise InvalidGeometry("liner cells do not match their bulk faces")

    return MixedDimGrid(bulk=mesh3, liner=liner_mesh,
                        mortar_liner=(side0, side1), liner_spec=liner,
                        realized_hole_area=hole_area)


# ---------------------------------------------------------------------------
# MSH ASCII v4.1 subset

_MSH_TYPE = {1: 2, 2: 3, 4: 4}        # element type -> node count
_TYPE_OF_DIM = {1: 1, 2: 2, 3: 4}


def load_msh(path) -> SubdomainMesh:
    """Read an MSH ASCII v4.1 subset: $MeshFormat, $Nodes, $Elements and
    (optionally) $PhysicalNames. Element types 1 (line), 2 (triangle) and
    4 (tetrahedron) are supported; each element block's entity tag is taken
    as its region/boundary tag. Unknown sections are skipped; anything else
    is rejected with a ParseError carrying the line number."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    idx = 0
    n_lines = len(lines)

    def next_line() -> tuple[str, int]:
        nonlocal idx
        while idx < n_lines:
            s = lines[idx].strip()
            idx += 1
            if s:
                return s, idx
        raise ParseError("unexpected end of file", n_lines)

    nodes_by_id: dict[int, tuple[float, float, float]] = {}
    elements: list[tuple[int, int, list[int], int]] = []   # (type, tag, nodes, line)
    names: dict[tuple[int, int], str] = {}
    saw_format = False

    while True:
        while idx < n_lines and not lines[idx].strip():
            idx += 1
        if idx >= n_lines:
            break
        s, ln = next_line()
        if not s.startswith("$"):
            raise ParseError(f"expected a section marker, got {s!r}", ln)
        section = s[1:]
        if section == "MeshFormat":
            s, ln = next_line()
            parts = s.split()
            if len(parts) < 2 or parts[0] != "4.1":
                raise ParseError(f"unsupported MSH version {parts[0] if parts else '?'}"
                                 " (only ASCII 4.1 is supported)", ln)
            if parts[1] != "0":
                raise ParseError("binary MSH files are not supported", ln)
            s, ln = next_line()
            if s != "$EndMeshFormat":
                raise ParseError("missing $EndMeshFormat", ln)
            saw_format = True
        elif section == "PhysicalNames":
            s, ln = next_line()
            try:
                count = int(s.split()[0])
            except ValueError:
                raise ParseError("malformed $PhysicalNames header", ln)
            for _ in range(count):
                s, ln = next_line()
                parts = s.split(maxsplit=2)
                try:
                    d, t = int(parts[0]), int(parts[1])
                except (ValueError, IndexError):
                    raise ParseError("malformed physical name entry", ln)
                names[(d, t)] = parts[2].strip().strip('"') if len(parts) > 2 else str(t)
            s, ln = next_line()
            if s != "$EndPhysicalNames":
                raise ParseError("missing $EndPhysicalNames", ln)
        elif section == "Nodes":
            s, ln = next_line()
            try:
                n_blocks, n_nodes = int(s.split()[0]), int(s.split()[1])
            except (ValueError, IndexError):
                raise ParseError("malformed $Nodes header", ln)
            for _ in range(n_blocks):
                s, ln = next_line()
                try:
                    block_n = int(s.split()[3])
                except (ValueError, IndexError):
                    raise ParseError("malformed node block header", ln)
                ids = []
                for _ in range(block_n):
                    s, ln = next_line()
                    try:
                        ids.append(int(s))
                    except ValueError:
                        raise ParseError(f"expected a node tag, got {s!r}", ln)
                for nid_ in ids:
                    s, ln = next_line()
                    parts = s.split()
                    if len(parts) < 3:
                        raise ParseError("node coordinates need 3 components", ln)
                    try:
                        nodes_by_id[nid_] = tuple(float(x) for x in parts[:3])
                    except ValueError:
                        raise ParseError(f"malformed coordinate line {s!r}", ln)
            s, ln = next_line()
            if s != "$EndNodes":
                raise ParseError("missing $EndNodes", ln)
        elif section == "Elements":
            s, ln = next_line()
            try:
                n_blocks = int(s.split()[0])
            except (ValueError, IndexError):
                raise ParseError("malformed $Elements header", ln)
            for _ in range(n_blocks):
                s, ln = next_line()
                parts = s.split()
                try:
                    _, etag, etype, block_n = (int(p) for p in parts[:4])
                except (ValueError, IndexError):
                    raise ParseError("malformed element block header", ln)
                if etype not in _MSH_TYPE:
                    raise ParseError(f"unsupported element type {etype} "
                                     "(only 1, 2, 4 are supported)", ln)
                width = _MSH_TYPE[etype]
                for _ in range(block_n):
                    s, ln = next_line()
                    parts = s.split()
                    if len(parts) != width + 1:
                        raise ParseError(f"element needs {width} node tags", ln)
                    try:
                        elements.append((etype, etag,
                                         [int(p) for p in parts[1:]], ln))
                    except ValueError:
                        raise ParseError(f"malformed element line {s!r}", ln)
            s, ln = next_line()
            if s != "$EndElements":
                raise ParseError("missing $EndElements", ln)
        else:
            # tolerated unknown section: skip to its end marker
            end = "$End" + section
            while True:
                s, ln = next_line()
                if s == end:
                    break

    if not saw_format:
        raise ParseError("missing $MeshFormat section", 1)
    if not nodes_by_id:
        raise ParseError("file contains no nodes", n_lines)
    if not elements:
        raise ParseError("file contains no elements", n_lines)

    id_list = sorted(nodes_by_id)
    id_map = {nid_: k for k, nid_ in enumerate(id_list)}
    nodes = np.array([nodes_by_id[n] for n in id_list])

    for etype, _, nids, ln in elements:
        for n in nids:
            if n not in id_map:
                raise ParseError(f"element references missing node {n}", ln)

    top_type = max(e[0] for e in elements)
    dim = {1: 1, 2: 2, 4: 3}[top_type]
    cells, ctags, clines = [], [], []
    lower = []
    for etype, etag, nids, ln in elements:
        mapped = [id_map[n] for n in nids]
        if etype == top_type:
            cells.append(mapped)
            ctags.append(etag)
            clines.append(ln)
        else:
            lower.append((etype, etag, tuple(sorted(mapped))))

    cells = np.array(cells, dtype=np.int64)
    if dim == 3:
        p = nodes[cells]
        det = np.einsum("ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]),
                        p[:, 3] - p[:, 0])
        bad = np.flatnonzero(det <= 0)
        if bad.size:
            raise ParseError("inverted or degenerate tetrahedron", clines[bad[0]])

    mesh = SubdomainMesh(dim, nodes, cells)
    compute_geometry(mesh)
    mesh.cell_tags = np.array(ctags, dtype=np.int64)

    if lower:
        face_lookup = {tuple(f): i for i, f in enumerate(map(tuple, mesh.faces))}
        for etype, etag, key in lower:
            fid = face_lookup.get(key)
            if fid is not None:
                mesh.boundary_tags[fid] = names.get((dim - 1, etag), str(etag))
    return mesh


def save_msh(mesh: SubdomainMesh, path) -> None:
    """Write the MSH ASCII v4.1 subset understood by :func:`load_msh`:
    nodes in one block, cells in one block per cell tag, boundary faces in
    one block per boundary tag, with tag names in $PhysicalNames."""
    buf = io.StringIO()
    buf.write("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n")

    cells = mesh.cells
    if mesh.dim == 3:
        # emit positively oriented tetrahedra
        p = mesh.nodes[cells]
        det = np.einsum("ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]),
                        p[:, 3] - p[:, 0])
        cells = cells.copy()
        flip = det < 0
        cells[flip, 2], cells[flip, 3] = mesh.cells[flip, 3], mesh.cells[flip, 2]

    # 1D boundary entities (points) are not representable in this subset
    tag_names = sorted(set(mesh.boundary_tags.values())) if mesh.dim > 1 else []
    tag_ids = {name: k + 2 for k, name in enumerate(tag_names)}   # 1 = cells
    if tag_names:
        buf.write("$PhysicalNames\n")
        buf.write(f"{len(tag_names)}\n")
        for name in tag_names:
            buf.write(f'{mesh.dim - 1} {tag_ids[name]} "{name}"\n')
        buf.write("$EndPhysicalNames\n")

    n = mesh.n_nodes
    buf.write("$Nodes\n")
    buf.write(f"1 {n} 1 {n}\n")
    buf.write(f"{mesh.dim} 1 0 {n}\n")
    for k in range(n):
        buf.write(f"{k + 1}\n")
    for p in mesh.nodes:
        buf.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
    buf.write("$EndNodes\n")

    by_tag: dict[str, list[int]] = {}
    if tag_names:
        for f, t in mesh.boundary_tags.items():
            by_tag.setdefault(t, []).append(f)

    n_blocks = 1 + len(by_tag)
    n_elem = mesh.n_cells + sum(len(v) for v in by_tag.values())
    buf.write("$Elements\n")
    buf.write(f"{n_blocks} {n_elem} 1 {n_elem}\n")
    eid = 1
    buf.write(f"{mesh.dim} 1 {_TYPE_OF_DIM[mesh.dim]} {mesh.n_cells}\n")
    for cell in cells:
        buf.write(f"{eid} " + " ".join(str(v + 1) for v in cell) + "\n")
        eid += 1
    ftype = _TYPE_OF_DIM.get(mesh.dim - 1)
    for name in tag_names:
        fids = sorted(by_tag[name])
        buf.write(f"{mesh.dim - 1} {tag_ids[name]} {ftype} {len(fids)}\n")
        for f in fids:
            buf.write(f"{eid} " + " ".join(str(v + 1) for v in mesh.faces[f]) + "\n")
            eid += 1
    buf.write("$EndElements\n")

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())

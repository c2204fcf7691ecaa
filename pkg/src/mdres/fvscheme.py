"""Cell-centered finite-volume assembly on a single subdomain.

Two schemes are provided. TPFA builds one transmissibility per face from
the harmonic composition of the two half-transmissibilities; it is
consistent only when face conormals line up with the cell-center axis.
MPFA-O builds multi-point transmissibilities from vertex-centered
interaction regions: per region, one constant gradient per incident cell
is determined by flux continuity and potential continuity at subface
centroids, giving a scheme that is exact for linear potentials on any
simplicial mesh.

Flux convention: the per-face flux is positive out of the face's
positively incident cell (the one with +1 in ``cell_faces``). Boundary
data is inflow-positive (a prescribed injection into the incident cell).

The assembled operator keeps the face-flux stencil ``flux`` (faces x
cells) and the boundary-data stencil ``bound_flux`` (faces x boundary
subfaces), so the cell matrix is div @ flux and reconstructed fluxes are
flux @ phi + bound_flux @ q.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps
from scipy.linalg import lu_factor as scipy_lu_factor, lu_solve as scipy_lu_solve

from .errors import (
    IllConditionedFace,
    SingularInteractionRegion,
    UnknownBoundaryTag,
)
from .mdgrid import SubdomainMesh, compute_geometry

__all__ = [
    "MaterialField",
    "DiscreteOperator",
    "BoundaryFluxSpec",
    "tpfa_assemble",
    "mpfa_o_assemble",
    "neumann_rhs",
    "reconstruct_fluxes",
]

# singularity threshold for local interaction systems, relative to max entry
_PIVOT_TOL = 1e-13


@dataclass
class MaterialField:
    """Per-cell scalar conductivity.

    For the bulk this is sigma in S/m; reduced subdomains carry their
    effective coefficient instead (electrode: pi r^2 sigma_rod in S m,
    liner: thickness * sigma_normal in S).
    """

    sigma: np.ndarray

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if np.any(~np.isfinite(self.sigma)) or np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive and finite in every cell")

    @classmethod
    def constant(cls, value: float, n_cells: int) -> "MaterialField":
        return cls(np.full(n_cells, float(value)))


@dataclass
class DiscreteOperator:
    """Assembled flux stencils of one subdomain.

    flux: (n_faces, n_cells) sparse, face flux per unit potential vector;
    bound_flux: (n_faces, n_bsub) sparse, face flux per unit prescribed
    outward boundary subface flux; matrix = div @ flux, the cell-to-cell
    operator; bsub_*: boundary subface parent face, area and centroid
    (quadrature points for boundary data).
    """

    mesh: SubdomainMesh
    scheme: str
    material: MaterialField
    flux: sps.csr_matrix
    bound_flux: sps.csr_matrix
    matrix: sps.csr_matrix
    bsub_face: np.ndarray
    bsub_area: np.ndarray
    bsub_center: np.ndarray

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    @property
    def div(self) -> sps.csr_matrix:
        return self.mesh.cell_faces.T.tocsr()


@dataclass
class BoundaryFluxSpec:
    """Prescribed Neumann data, inflow-positive, keyed by boundary tag.

    ``density``: A/m^2, a constant or a callable evaluated at quadrature
    points ((n, 3) -> (n,)). ``total``: A per tagged face, for 0-d faces
    (electrode tips/tops) and lumped injections; distributed over a face's
    subfaces by area fraction. Untagged or unlisted faces default to 0
    (insulation).
    """

    density: dict[str, float | Callable] = field(default_factory=dict)
    total: dict[str, float] = field(default_factory=dict)

    def known_tags(self) -> set[str]:
        return set(self.density) | set(self.total)


def _check_tags(mesh: SubdomainMesh, spec: BoundaryFluxSpec) -> None:
    present = set(mesh.boundary_tags.values())
    missing = spec.known_tags() - present
    if missing:
        raise UnknownBoundaryTag(
            f"no mesh face carries tag(s) {sorted(missing)}; present: {sorted(present)}")


def _subface_inflow(mesh: SubdomainMesh, spec: BoundaryFluxSpec,
                    bsub_face: np.ndarray, bsub_area: np.ndarray,
                    bsub_center: np.ndarray) -> np.ndarray:
    """Inflow (A) per boundary subface from the tag-keyed spec."""
    _check_tags(mesh, spec)
    q = np.zeros(len(bsub_face))
    if not spec.known_tags():
        return q
    tag_of = mesh.boundary_tags
    face_tag = np.array([tag_of.get(int(f), "") for f in bsub_face])
    for tag, dens in spec.density.items():
        sel = face_tag == tag
        if not sel.any():
            continue
        if callable(dens):
            q[sel] += np.asarray(dens(bsub_center[sel]), dtype=float) * bsub_area[sel]
        else:
            q[sel] += float(dens) * bsub_area[sel]
    if spec.total:
        area_of_face = np.zeros(mesh.n_faces)
        np.add.at(area_of_face, bsub_face, bsub_area)
        for tag, tot in spec.total.items():
            sel = face_tag == tag
            if sel.any():
                q[sel] += float(tot) * bsub_area[sel] / area_of_face[bsub_face[sel]]
    return q


def neumann_rhs(mesh: SubdomainMesh, spec: BoundaryFluxSpec,
                operator: DiscreteOperator | None = None) -> np.ndarray:
    """Cell vector of prescribed boundary inflow (A).

    Without an operator, each face's total inflow lands in its incident
    cell (exact for homogeneous data and 0-d faces). With the operator,
    the data is applied at boundary-subface granularity through the
    assembled ``bound_flux`` stencil, which also carries the induced
    corrections on nearby interior faces (needed for distributed data
    under MPFA).
    """
    if mesh.cell_volumes is None:
        compute_geometry(mesh)
    if operator is None:
        _check_tags(mesh, spec)
        r = np.zeros(mesh.n_cells)
        fc = mesh.face_centers
        fa = mesh.face_areas
        for f, tag in mesh.boundary_tags.items():
            inflow = 0.0
            dens = spec.density.get(tag)
            if dens is not None:
                val = dens(fc[None, f])[0] if callable(dens) else float(dens)
                inflow += val * fa[f]
            if tag in spec.total:
                inflow += float(spec.total[tag])
            if inflow != 0.0:
                cell = int(mesh.face_cells[f, 0])
                r[cell] += inflow
        return r
    q_in = _subface_inflow(operator.mesh, spec, operator.bsub_face,
                           operator.bsub_area, operator.bsub_center)
    # outward offsets q0 = bound_flux @ (-q_in); balance rhs is -div q0
    q0 = operator.bound_flux @ (-q_in)
    return -(operator.div @ q0)


def reconstruct_fluxes(operator: DiscreteOperator, potentials: np.ndarray,
                       spec: BoundaryFluxSpec | None = None) -> np.ndarray:
    """Per-face fluxes (A), positive out of the positively incident cell."""
    q = operator.flux @ np.asarray(potentials, dtype=float)
    if spec is not None:
        q_in = _subface_inflow(operator.mesh, spec, operator.bsub_face,
                               operator.bsub_area, operator.bsub_center)
        q += operator.bound_flux @ (-q_in)
    return q


# ---------------------------------------------------------------------------
# TPFA


def tpfa_assemble(mesh: SubdomainMesh, material: MaterialField) -> DiscreteOperator:
    """Two-point transmissibilities T = a_K a_L / (a_K + a_L) with
    half-transmissibilities a_K = sigma_K A_f (d_K . n) / |d_K|^2, d_K from
    cell center to face center and n the cell's outward face normal."""
    if mesh.cell_volumes is None:
        compute_geometry(mesh)
    sigma = material.sigma
    if len(sigma) != mesh.n_cells:
        raise ValueError("material field does not match the mesh")

    n_faces = mesh.n_faces
    half = np.zeros((n_faces, 2))
    for j in range(mesh.dim + 1):
        fid = mesh.cells_fid[:, j]
        cells = np.arange(mesh.n_cells)
        d = mesh.face_centers[fid] - mesh.cell_centers
        d2 = np.einsum("ij,ij->i", d, d)
        dn = np.einsum("ij,ij->i", d, mesh.cells_fnormal[:, j, :])
        a = sigma[cells] * mesh.face_areas[fid] * dn / d2
        side = (mesh.cells_fsign[:, j] < 0).astype(int)
        half[fid, side] = a

    bad = np.flatnonzero((half <= 0).any(axis=1)
                         & (mesh.face_cells >= 0).all(axis=1))
    for f in bad:
        warnings.warn(f"non-positive half-transmissibility on face {int(f)}",
                      IllConditionedFace, stacklevel=2)

    interior = np.flatnonzero(mesh.face_cells[:, 1] >= 0)
    aK, aL = half[interior, 0], half[interior, 1]
    denom = aK + aL
    T = np.where(np.abs(denom) > 0, aK * aL / np.where(denom == 0, 1.0, denom), 0.0)

    rows = np.concatenate([interior, interior])
    cols = np.concatenate([mesh.face_cells[interior, 0], mesh.face_cells[interior, 1]])
    vals = np.concatenate([T, -T])
    flux = sps.csr_matrix((vals, (rows, cols)), shape=(n_faces, mesh.n_cells))

    bnd = mesh.boundary_faces()
    bound_flux = sps.csr_matrix(
        (np.ones(len(bnd)), (bnd, np.arange(len(bnd)))),
        shape=(n_faces, len(bnd)))

    matrix = (mesh.cell_faces.T @ flux).tocsr()
    return DiscreteOperator(
        mesh=mesh, scheme="tpfa", material=material, flux=flux,
        bound_flux=bound_flux, matrix=matrix, bsub_face=bnd,
        bsub_area=mesh.face_areas[bnd].copy(),
        bsub_center=mesh.face_centers[bnd].copy())


# ---------------------------------------------------------------------------
# MPFA-O


def _subface_centroids(mesh: SubdomainMesh, t_vertex: np.ndarray,
                       t_face: np.ndarray) -> np.ndarray:
    """Centroid of the subface of face f assigned to vertex v.

    dim 3: the quadrilateral (v, edge midpoints, face centroid) has
    centroid (22 v + 7 b + 7 c)/36 for face nodes (v, b, c); dim 2: the
    half-edge centroid (3 v + b)/4; dim 1: the point itself.
    """
    dim = mesh.dim
    vpos = mesh.nodes[t_vertex]
    if dim == 1:
        return vpos
    fnodes = mesh.faces[t_face]                      # (n, dim)
    # gather the face nodes that are not the subface vertex
    mask = fnodes != t_vertex[:, None]
    rest = fnodes[mask].reshape(len(fnodes), dim - 1)
    if dim == 2:
        return (3.0 * vpos + mesh.nodes[rest[:, 0]]) / 4.0
    b = mesh.nodes[rest[:, 0]]
    c = mesh.nodes[rest[:, 1]]
    return (22.0 * vpos + 7.0 * b + 7.0 * c) / 36.0


def _region_components(cells: np.ndarray, faces_loc: np.ndarray) -> list[np.ndarray]:
    """Split an interaction region into face-connected cell components.

    cells/faces_loc list the (cell, face) incidences at one vertex; cells
    sharing a face id are joined. Returns index arrays into the incidence
    list, one per component.
    """
    n = len(cells)
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    order = np.argsort(faces_loc, kind="stable")
    fs = faces_loc[order]
    same = np.flatnonzero(fs[1:] == fs[:-1])
    for k in same:
        a, b = find(order[k]), find(order[k + 1])
        if a != b:
            parent[b] = a
    # also join incidences of the same cell (a cell is one connected unit)
    order_c = np.argsort(cells, kind="stable")
    cs = cells[order_c]
    same_c = np.flatnonzero(cs[1:] == cs[:-1])
    for k in same_c:
        a, b = find(order_c[k]), find(order_c[k + 1])
        if a != b:
            parent[b] = a
    roots = np.array([find(i) for i in range(n)])
    comps = []
    for r in np.unique(roots):
        comps.append(np.flatnonzero(roots == r))
    return comps


def mpfa_o_assemble(mesh: SubdomainMesh, material: MaterialField) -> DiscreteOperator:
    """O-method assembly with continuity points at subface centroids.

    Per vertex, the incident (cell, face) pairs form the interaction
    region, split into face-connected components (a liner split separates
    the two sides). Unknowns are one gradient per component cell in the
    cell's local orthonormal basis; equations are flux continuity and
    potential continuity on interior subfaces and prescribed flux on
    boundary subfaces. The local system is row-equilibrated and solved
    densely; subface fluxes are emitted from the positively incident cell.
    """
    if mesh.cell_volumes is None:
        compute_geometry(mesh)
    sigma = material.sigma
    if len(sigma) != mesh.n_cells:
        raise ValueError("material field does not match the mesh")

    dim = mesh.dim
    n_cells, n_faces = mesh.n_cells, mesh.n_faces

    # (cell, local face, vertex) incidences: each cell face owns the
    # subfaces at its dim vertices
    cf = mesh.cells_fid                                   # (n_cells, dim+1)
    t_cell = np.repeat(np.arange(n_cells), (dim + 1) * dim)
    t_face = np.repeat(cf.ravel(), dim)
    fnodes = mesh.faces[cf.ravel()]                       # (n_cells*(dim+1), dim)
    t_vertex = fnodes.ravel()
    loc_face = np.tile(np.repeat(np.arange(dim + 1), dim), n_cells)

    t_area = mesh.face_areas[t_face] / dim
    t_centroid = _subface_centroids(mesh, t_vertex, t_face)
    t_normal = mesh.cells_fnormal[t_cell, loc_face, :]

    if dim == 3:
        # basis = identity; store projected rows directly
        t_nB = sigma[t_cell, None] * t_area[:, None] * t_normal
        t_xB = t_centroid - mesh.cell_centers[t_cell]
    else:
        basis = mesh.cell_basis[t_cell]                    # (n, dim, 3)
        t_nB = sigma[t_cell, None] * t_area[:, None] * np.einsum(
            "nkj,nj->nk", basis, t_normal)
        t_xB = np.einsum("nkj,nj->nk", basis,
                         t_centroid - mesh.cell_centers[t_cell])

    # boundary subface ids in (face, triple) order
    is_bnd_face = mesh.face_cells[:, 1] < 0
    t_is_bnd = is_bnd_face[t_face]
    bnd_triples = np.flatnonzero(t_is_bnd)
    order_b = bnd_triples[np.argsort(t_face[bnd_triples], kind="stable")]
    bsub_of_triple = -np.ones(len(t_cell), dtype=np.int64)
    bsub_of_triple[order_b] = np.arange(len(order_b))
    bsub_face = t_face[order_b]
    bsub_area = t_area[order_b]
    bsub_center = t_centroid[order_b]
    n_bsub = len(order_b)

    plus_cell = mesh.face_cells[:, 0]

    # group triples by vertex
    order_v = np.argsort(t_vertex, kind="stable")
    tv = t_vertex[order_v]
    starts = np.flatnonzero(np.concatenate([[True], tv[1:] != tv[:-1]]))
    starts = np.append(starts, len(tv))

    rows_Q: list[np.ndarray] = []
    cols_Q: list[np.ndarray] = []
    vals_Q: list[np.ndarray] = []
    rows_B: list[np.ndarray] = []
    cols_B: list[np.ndarray] = []
    vals_B: list[np.ndarray] = []

    for s0, s1 in zip(starts[:-1], starts[1:]):
        tri = order_v[s0:s1]
        vertex = int(tv[s0])
        comps = _region_components(t_cell[tri], t_face[tri])
        for comp in comps:
            tc = tri[comp]
            cells = np.unique(t_cell[tc])
            n_c = len(cells)
            n_u = dim * n_c
            cell_pos = {int(c): k for k, c in enumerate(cells)}

            faces_c = t_face[tc]
            forder = np.argsort(faces_c, kind="stable")
            fsorted = faces_c[forder]
            fstarts = np.flatnonzero(np.concatenate([[True], fsorted[1:] != fsorted[:-1]]))
            fstarts = np.append(fstarts, len(fsorted))

            sub_faces = []          # (face id, triple plus, triple minus or -1)
            for a, b in zip(fstarts[:-1], fstarts[1:]):
                f = int(fsorted[a])
                ts = tc[forder[a:b]]
                if len(ts) == 2:
                    if t_cell[ts[0]] == plus_cell[f]:
                        sub_faces.append((f, int(ts[0]), int(ts[1])))
                    else:
                        sub_faces.append((f, int(ts[1]), int(ts[0])))
                else:
                    sub_faces.append((f, int(ts[0]), -1))

            n_int = sum(1 for _, _, tm in sub_faces if tm >= 0)
            n_bnd = len(sub_faces) - n_int
            n_rows = 2 * n_int + n_bnd
            if n_rows != n_u:
                raise SingularInteractionRegion(vertex)

            A = np.zeros((n_rows, n_u))
            Bphi = np.zeros((n_rows, n_c))
            bq_cols = []            # (local row, global bsub id)
            emit = []               # (face id, triple, row sign) emission carriers

            r = 0
            for f, tp, tm in sub_faces:
                kp = cell_pos[int(t_cell[tp])]
                if tm >= 0:
                    km = cell_pos[int(t_cell[tm])]
                    # flux continuity: sum of outward co-normal fluxes is 0
                    A[r, dim * kp:dim * kp + dim] = t_nB[tp]
                    A[r, dim * km:dim * km + dim] = t_nB[tm]
                    r += 1
                    # potential continuity at the subface centroid
                    A[r, dim * kp:dim * kp + dim] = t_xB[tp]
                    A[r, dim * km:dim * km + dim] -= t_xB[tm]
                    Bphi[r, km] += 1.0
                    Bphi[r, kp] -= 1.0
                    r += 1
                else:
                    # prescribed outward flux: sigma A n . g = -q_out
                    A[r, dim * kp:dim * kp + dim] = t_nB[tp]
                    bq_cols.append((r, int(bsub_of_triple[tp])))
                    r += 1

            scale = np.abs(A).max(axis=1)
            if np.any(scale <= 0.0) or np.any(~np.isfinite(scale)):
                raise SingularInteractionRegion(vertex)
            Ainv_rhs = np.zeros((n_rows, n_c + len(bq_cols)))
            Ainv_rhs[:, :n_c] = Bphi
            for k, (rr, _) in enumerate(bq_cols):
                Ainv_rhs[rr, n_c + k] = -1.0
            As = A / scale[:, None]
            rhs = Ainv_rhs / scale[:, None]
            # dense LU with partial pivoting; reject tiny pivots
            try:
                G = _solve_checked(As, rhs, vertex)
            except np.linalg.LinAlgError:
                raise SingularInteractionRegion(vertex) from None

            # emit subface fluxes from the plus side
            for f, tp, tm in sub_faces:
                if tm < 0:
                    # boundary subface: flux equals the prescribed value
                    rows_B.append(np.array([f]))
                    cols_B.append(np.array([bsub_of_triple[tp]]))
                    vals_B.append(np.array([1.0]))
                    continue
                kp = cell_pos[int(t_cell[tp])]
                w = t_nB[tp]
                coef = -(w @ G[dim * kp:dim * kp + dim, :])
                rows_Q.append(np.full(n_c, f))
                cols_Q.append(cells)
                vals_Q.append(coef[:n_c])
                if bq_cols:
                    bq = np.array([g for _, g in bq_cols], dtype=np.int64)
                    rows_B.append(np.full(len(bq), f))
                    cols_B.append(bq)
                    vals_B.append(coef[n_c:])

    flux = sps.coo_matrix(
        (np.concatenate(vals_Q) if vals_Q else np.zeros(0),
         (np.concatenate(rows_Q) if rows_Q else np.zeros(0, dtype=np.int64),
          np.concatenate(cols_Q) if cols_Q else np.zeros(0, dtype=np.int64))),
        shape=(n_faces, n_cells)).tocsr()
    bound_flux = sps.coo_matrix(
        (np.concatenate(vals_B) if vals_B else np.zeros(0),
         (np.concatenate(rows_B) if rows_B else np.zeros(0, dtype=np.int64),
          np.concatenate(cols_B) if cols_B else np.zeros(0, dtype=np.int64))),
        shape=(n_faces, n_bsub)).tocsr()

    matrix = (mesh.cell_faces.T @ flux).tocsr()
    return DiscreteOperator(
        mesh=mesh, scheme="mpfa", material=material, flux=flux,
        bound_flux=bound_flux, matrix=matrix, bsub_face=bsub_face,
        bsub_area=bsub_area, bsub_center=bsub_center)


def _solve_checked(A: np.ndarray, rhs: np.ndarray, vertex: int) -> np.ndarray:
    """LU with partial pivoting and an explicit pivot floor, so
    near-singular regions fail loudly instead of polluting the operator."""
    lu, piv = scipy_lu_factor(A, check_finite=False)
    tol = _PIVOT_TOL * max(np.abs(A).max(), 1e-300)
    if np.abs(np.diag(lu)).min() < tol:
        raise SingularInteractionRegion(vertex)
    return scipy_lu_solve((lu, piv), rhs, check_finite=False)

"""Dimension-coupling terms and the global mixed-dimensional system.

Electrodes exchange current with their host cells through a Peaceman-type
conductance per intersected sub-segment; the liner couples each of its
cells to the two adjacent bulk cells through a Robin conductance composed
in series with the bulk half-transmissibility of the facing cell. All
exchange terms are antisymmetric pairs, so the assembled operator keeps
the constant-potential nullspace of the pure-Neumann problem.

Mortar unknowns (one exchange current per coupling pair) are affine in
the two potentials they tie together; by default they are eliminated
before the solve and reconstructed afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .errors import (
    AssemblyMismatch,
    BrokenMortar,
    InvalidGeometry,
    NonpositiveDenominator,
    UnmappedElectrode,
)
from .fvscheme import BoundaryFluxSpec, DiscreteOperator, neumann_rhs
from .mdgrid import LinerSideMap, SubdomainMesh
from .solver import DofLayout, LinearSystem
from .spatial import ElectrodeSegmentMap

__all__ = [
    "ElectrodeSpec",
    "CouplingBlock",
    "peaceman_conductance",
    "assemble_electrode",
    "assemble_liner",
    "assemble_global",
    "exchange_currents",
]


@dataclass
class ElectrodeSpec:
    """One rod electrode: geometry, material and role.

    polyline: (n, 3) coordinates from top to tip; radius/length in m;
    sigma_rod: material conductivity (S/m); skin: dimensionless contact
    factor; role: "current" or "potential"; current: injected i (A),
    0 for potential electrodes.
    """

    polyline: np.ndarray
    radius: float
    length: float
    sigma_rod: float
    skin: float = 0.0
    role: str = "potential"
    current: float = 0.0

    def __post_init__(self):
        self.polyline = np.asarray(self.polyline, dtype=float).reshape(-1, 3)
        if len(self.polyline) < 2:
            raise InvalidGeometry("electrode polyline needs at least two points")
        if self.radius <= 0 or self.length <= 0 or self.sigma_rod <= 0:
            raise InvalidGeometry("electrode radius, length and conductivity must be positive")
        if self.skin < 0:
            raise InvalidGeometry("skin factor must be non-negative")
        if self.role not in ("current", "potential"):
            raise InvalidGeometry(f"unknown electrode role {self.role!r}")
        if self.role == "potential" and self.current != 0.0:
            raise InvalidGeometry("potential electrodes carry no injected current")

    @property
    def top(self) -> np.ndarray:
        return self.polyline[0]

    @property
    def tip(self) -> np.ndarray:
        return self.polyline[-1]


@dataclass
class CouplingBlock:
    """Exchange conductances between one lower-dimensional subdomain and
    the bulk: pairs (bulk cell, lower-dim cell, conductance in S), one
    mortar dof per pair."""

    kind: str                       # "electrode" or "liner"
    pairs_bulk: np.ndarray
    pairs_low: np.ndarray
    conductance: np.ndarray
    faces: np.ndarray | None = None   # bulk faces (liner only), for reporting

    def __post_init__(self):
        self.pairs_bulk = np.asarray(self.pairs_bulk, dtype=np.int64).reshape(-1)
        self.pairs_low = np.asarray(self.pairs_low, dtype=np.int64).reshape(-1)
        self.conductance = np.asarray(self.conductance, dtype=float).reshape(-1)
        if not (len(self.pairs_bulk) == len(self.pairs_low) == len(self.conductance)):
            raise AssemblyMismatch("coupling pair arrays differ in length")
        if np.any(self.conductance <= 0) or np.any(~np.isfinite(self.conductance)):
            raise AssemblyMismatch("coupling conductances must be positive and finite")

    @property
    def n_mortar(self) -> int:
        return len(self.conductance)


def peaceman_conductance(sigma_bulk: float, r: float, h_cell: float,
                         skin: float = 0.0) -> float:
    """Lateral exchange coefficient 2 pi sigma / (ln(0.2 h / r) + S), S/m.

    The equivalent radius 0.2 h uses the host-cell diameter h; the grid
    must stay coarse enough (or the skin large enough) that the
    denominator is positive.
    """
    if sigma_bulk <= 0 or r <= 0 or h_cell <= 0:
        raise ValueError("sigma, radius and cell size must be positive")
    denom = np.log(0.2 * h_cell / r) + skin
    if denom <= 0:
        raise NonpositiveDenominator(
            f"ln(0.2 h / r) + S = {denom:.4f} <= 0 for h = {h_cell:.4g}, r = {r:.4g}; "
            "coarsen the grid near the electrode or increase the skin factor")
    return 2.0 * np.pi * sigma_bulk / denom


def assemble_electrode(seg_map: ElectrodeSegmentMap, sigma_gamma: np.ndarray,
                       electrode_op: DiscreteOperator) -> CouplingBlock:
    """Exchange block of one electrode.

    sigma_gamma holds the Peaceman coefficient (S/m) per map entry,
    evaluated by the caller with each entry's host-cell diameter; the
    entry conductance is sigma_gamma * intersection length. The
    electrode's own 1D operator travels along for global assembly.
    """
    if not seg_map.entries:
        raise UnmappedElectrode(seg_map.total_length)
    sigma_gamma = np.asarray(sigma_gamma, dtype=float).reshape(-1)
    if len(sigma_gamma) != len(seg_map.entries):
        raise AssemblyMismatch("sigma_gamma does not match the segment map entries")
    segs = np.array([e[0] for e in seg_map.entries], dtype=np.int64)
    cells = np.array([e[1] for e in seg_map.entries], dtype=np.int64)
    lengths = np.array([e[2] for e in seg_map.entries])
    if segs.max() >= electrode_op.mesh.n_cells:
        raise AssemblyMismatch("segment map references 1D cells outside the electrode mesh")
    block = CouplingBlock(kind="electrode", pairs_bulk=cells, pairs_low=segs,
                          conductance=sigma_gamma * lengths)
    return block


def assemble_liner(side_maps: tuple[LinerSideMap, LinerSideMap],
                   sigma_lambda: float, thickness: float,
                   bulk_op: DiscreteOperator) -> CouplingBlock:
    """Exchange block of the liner (both sides).

    Per liner cell of area A on each side: Robin conductance
    C = sigma_lambda A / thickness, composed in series with the bulk
    half-transmissibility a of the facing cell, g = a C / (a + C). The
    composition is exact in the transparent limit (C -> inf recovers the
    two-point transmissibility of the unsplit face) and indistinguishable
    from C alone when the liner is nearly insulating.
    """
    if sigma_lambda <= 0 or thickness <= 0:
        raise InvalidGeometry("liner conductivity and thickness must be positive")
    mesh = bulk_op.mesh
    pb, pl, g, fs = [], [], [], []
    for side in side_maps:
        faces = side.bulk_faces
        cells = side.bulk_cells
        if np.any(mesh.face_cells[faces, 0] != cells) or np.any(mesh.face_cells[faces, 1] >= 0):
            bad = faces[(mesh.face_cells[faces, 0] != cells)
                        | (mesh.face_cells[faces, 1] >= 0)]
            raise BrokenMortar(int(bad[0]))
        A = mesh.face_areas[faces]
        d = mesh.face_centers[faces] - mesh.cell_centers[cells]
        # split faces keep their cell as the positive side, so the stored
        # normal is this cell's outward normal
        dn = np.einsum("ij,ij->i", d, mesh.face_normals[faces])
        alpha = bulk_op.material.sigma[cells] * A * dn / np.einsum("ij,ij->i", d, d)
        if np.any(alpha <= 0):
            raise BrokenMortar(int(faces[np.flatnonzero(alpha <= 0)[0]]))
        C = sigma_lambda * A / thickness
        pb.append(cells)
        pl.append(np.arange(len(faces), dtype=np.int64))
        g.append(alpha * C / (alpha + C))
        fs.append(faces)
    return CouplingBlock(kind="liner",
                         pairs_bulk=np.concatenate(pb),
                         pairs_low=np.concatenate(pl),
                         conductance=np.concatenate(g),
                         faces=np.concatenate(fs))


def assemble_global(bulk_op: DiscreteOperator,
                    liner_op: DiscreteOperator | None,
                    electrode_ops: list[DiscreteOperator],
                    blocks: list[CouplingBlock],
                    injections: list[float],
                    explicit_mortars: bool = False) -> LinearSystem:
    """Merge subdomain operators, exchange blocks and injections into one
    linear system over the concatenated potential (and mortar) dofs.

    The dof order is [bulk | liner | electrodes... | mortars (explicit
    mode only)]. With eliminated mortars (default) each exchange current
    j = g (phi_K - phi_c) is substituted into both balances; in explicit
    mode j stays as an unknown with its defining row j/g - phi_K + phi_c
    = 0. Injections are applied at each electrode's top face,
    inflow-positive. The result keeps the constant vector (over potential
    dofs) in its nullspace.
    """
    elec_blocks = [b for b in blocks if b.kind == "electrode"]
    liner_blocks = [b for b in blocks if b.kind == "liner"]
    if len(elec_blocks) != len(electrode_ops):
        raise AssemblyMismatch("one coupling block per electrode operator is required")
    if liner_blocks and liner_op is None:
        raise AssemblyMismatch("liner coupling block without a liner operator")
    if len(injections) != len(electrode_ops):
        raise AssemblyMismatch("one injection per electrode is required")

    names = ["bulk"]
    sizes = [bulk_op.mesh.n_cells]
    meas = [bulk_op.mesh.cell_volumes]
    if liner_op is not None:
        names.append("liner")
        sizes.append(liner_op.mesh.n_cells)
        meas.append(liner_op.mesh.cell_volumes)
    for i, eop in enumerate(electrode_ops):
        names.append(f"electrode{i}")
        sizes.append(eop.mesh.n_cells)
        meas.append(eop.mesh.cell_volumes)

    mortar_names: list[str] = []
    if explicit_mortars:
        for i, b in enumerate(elec_blocks):
            mortar_names.append(f"mortar_electrode{i}")
            sizes.append(b.n_mortar)
            meas.append(np.zeros(b.n_mortar))
        for b in liner_blocks:
            mortar_names.append("mortar_liner")
            sizes.append(b.n_mortar)
            meas.append(np.zeros(b.n_mortar))
        names.extend(mortar_names)

    layout = DofLayout(names=names, sizes=np.array(sizes, dtype=np.int64))
    n = layout.n_total

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    def add_coo(mat: sps.spmatrix, roff: int, coff: int) -> None:
        coo = mat.tocoo()
        rows.append(coo.row + roff)
        cols.append(coo.col + coff)
        vals.append(coo.data)

    add_coo(bulk_op.matrix, 0, 0)
    if liner_op is not None:
        off = layout.offset("liner")
        add_coo(liner_op.matrix, off, off)
    for i, eop in enumerate(electrode_ops):
        off = layout.offset(f"electrode{i}")
        add_coo(eop.matrix, off, off)

    def add_exchange(block: CouplingBlock, low_off: int, mortar_off: int | None) -> None:
        K = block.pairs_bulk
        c = block.pairs_low + low_off
        g = block.conductance
        if K.max(initial=-1) >= bulk_op.mesh.n_cells:
            raise AssemblyMismatch("coupling references bulk cells outside the mesh")
        if mortar_off is None:
            rows.append(K); cols.append(K); vals.append(g)
            rows.append(K); cols.append(c); vals.append(-g)
            rows.append(c); cols.append(c); vals.append(g)
            rows.append(c); cols.append(K); vals.append(-g)
        else:
            m = mortar_off + np.arange(block.n_mortar)
            one = np.ones(block.n_mortar)
            # balances: bulk loses j, lower-dim gains j
            rows.append(K); cols.append(m); vals.append(one)
            rows.append(c); cols.append(m); vals.append(-one)
            # mortar definition: j/g - phi_K + phi_c = 0
            rows.append(m); cols.append(m); vals.append(1.0 / g)
            rows.append(m); cols.append(K); vals.append(-one)
            rows.append(m); cols.append(c); vals.append(one)

    mortar_offsets: list[int] = []
    if explicit_mortars:
        base = layout.offset(mortar_names[0]) if mortar_names else n
        cursor = base
        for b in elec_blocks + liner_blocks:
            mortar_offsets.append(cursor)
            cursor += b.n_mortar
    for i, b in enumerate(elec_blocks):
        low_off = layout.offset(f"electrode{i}")
        if b.pairs_low.max(initial=-1) >= electrode_ops[i].mesh.n_cells:
            raise AssemblyMismatch("electrode block references cells outside its mesh")
        add_exchange(b, low_off,
                     mortar_offsets[i] if explicit_mortars else None)
    for k, b in enumerate(liner_blocks):
        low_off = layout.offset("liner")
        if b.pairs_low.max(initial=-1) >= liner_op.mesh.n_cells:
            raise AssemblyMismatch("liner block references cells outside the liner mesh")
        add_exchange(b, low_off,
                     mortar_offsets[len(elec_blocks) + k] if explicit_mortars else None)

    matrix = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()

    rhs = np.zeros(n)
    for i, (eop, inj) in enumerate(zip(electrode_ops, injections)):
        if inj == 0.0:
            continue
        spec = BoundaryFluxSpec(total={"top": float(inj)})
        rhs[layout.slice(f"electrode{i}")] += neumann_rhs(eop.mesh, spec)

    weights = np.concatenate(meas)
    named = [(f"electrode{i}", b) for i, b in enumerate(elec_blocks)]
    named += [("liner", b) for b in liner_blocks]
    return LinearSystem(matrix=matrix, rhs=rhs, layout=layout, weights=weights,
                        blocks=named)


def exchange_currents(solution) -> dict[str, np.ndarray]:
    """Per-pair exchange currents j = g (phi_bulk - phi_low), in A.

    Positive j flows from the bulk into the lower-dimensional subdomain,
    so a current electrode injecting +i sheds -i here in total. Fills
    and returns solution.exchange keyed by subdomain name.
    """
    sysm = solution.system
    layout = sysm.layout
    out: dict[str, np.ndarray] = {}
    for name, block in sysm.blocks:
        mname = (f"mortar_electrode{name.removeprefix('electrode')}"
                 if block.kind == "electrode" else "mortar_liner")
        if mname in layout.names:
            j = solution.values[layout.slice(mname)].copy()
        else:
            phi_k = solution.values[layout.offset("bulk") + block.pairs_bulk]
            phi_c = solution.values[layout.offset(name) + block.pairs_low]
            j = block.conductance * (phi_k - phi_c)
        out[name] = j
    solution.exchange = out
    return out

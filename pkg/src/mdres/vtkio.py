"""Legacy VTK ASCII export of mixed-dimensional solutions.

One UNSTRUCTURED_GRID file per subdomain, carrying the cell potential
and a cell-centered current vector reconstructed from the face fluxes.
The format is the legacy v3.0 text dialect, which every common viewer
reads and which can be pinned byte for byte in tests.
"""

from __future__ import annotations

import numpy as np

from .fvscheme import BoundaryFluxSpec, reconstruct_fluxes

__all__ = ["cell_current", "write_vtk", "export_solution"]

# VTK cell ids for the three simplex families
_CELL_TYPE = {1: 3, 2: 5, 3: 10}


def cell_current(mesh, fluxes: np.ndarray) -> np.ndarray:
    """Cell-centered current vector from signed face fluxes.

    J_K = (1/V_K) sum_f s_Kf q_f (x_f - x_K), exact whenever the flux
    field is constant over the cell and first-order accurate otherwise.
    Units follow the cell measure: A/m^2 in the bulk, A/m on the liner
    sheet, plain A along a rod.
    """
    d = mesh.face_centers[mesh.cells_fid] - mesh.cell_centers[:, None, :]
    q = mesh.cells_fsign * fluxes[mesh.cells_fid]
    return np.einsum("cj,cjk->ck", q, d) / mesh.cell_volumes[:, None]


def write_vtk(path, mesh, scalars: dict[str, np.ndarray],
              vectors: dict[str, np.ndarray], title: str = "mdres fields") -> None:
    """Write one subdomain mesh with cell data to a legacy VTK file."""
    n_cells = mesh.n_cells
    nodes = np.asarray(mesh.nodes, dtype=float)
    conn = np.asarray(mesh.cells, dtype=int)
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(nodes)} double\n")
        np.savetxt(fh, nodes, fmt="%.12e")
        width = conn.shape[1]
        fh.write(f"CELLS {n_cells} {n_cells * (width + 1)}\n")
        np.savetxt(fh, np.hstack([np.full((n_cells, 1), width), conn]), fmt="%d")
        fh.write(f"CELL_TYPES {n_cells}\n")
        np.savetxt(fh, np.full(n_cells, _CELL_TYPE[mesh.dim]), fmt="%d")
        fh.write(f"CELL_DATA {n_cells}\n")
        for name, values in scalars.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, np.asarray(values, dtype=float), fmt="%.12e")
        for name, values in vectors.items():
            fh.write(f"VECTORS {name} double\n")
            np.savetxt(fh, np.asarray(values, dtype=float), fmt="%.12e")


def export_solution(result, out_dir, basename: str = "solution") -> list:
    """Write potential and current fields, one VTK file per subdomain.

    Returns the written paths in subdomain order. Electrode fluxes
    include the injected boundary current (read back from the assembled
    right-hand side) so the rod current is continuous up to the top.
    """
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    layout = result.solution.system.layout
    written = []
    for name, mesh in result.grid.subdomains().items():
        phi = result.solution.potentials[name]
        spec = None
        if name.startswith("electrode"):
            inj = float(result.solution.system.rhs[layout.slice(name)].sum())
            spec = BoundaryFluxSpec(total={"top": inj})
        q = reconstruct_fluxes(result.operators[name], phi, spec)
        path = out / f"{basename}_{name}.vtk"
        write_vtk(path, mesh, {"potential": phi},
                  {"current_density": cell_current(mesh, q)})
        written.append(path)
    return written

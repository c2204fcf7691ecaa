"""Delimited output and companion figures for sweep and solve runs.

CSV files are the primary artifact: comma separated, header row, UTF-8,
LF endings, every float printed as %.12e so reruns and thread counts
produce byte-identical bytes. Figures are rendered next to the tables
as a quick visual check, never as a data source.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["format_cell", "write_csv", "depth_figure", "histogram_figure",
           "analytic_figure"]


def format_cell(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.12e" % float(value)
    return str(value)


def write_csv(path, columns, rows) -> Path:
    """One header row plus the data rows, deterministically formatted."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(str(c) for c in columns) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(v) for v in row) + "\n")
    return path


def _axes(title: str, xlabel: str, ylabel: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2), layout="tight")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def depth_figure(table, path, rho: float | None = None) -> Path:
    """Apparent resistivity against liner depth, one line per strategy,
    with the layered-halfspace reference curve when rho is given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = _axes("apparent resistivity vs liner depth",
                    "liner depth (m)", "rho_a (ohm m)")
    depths = np.array(table.column("depth_m"))
    rhos = np.array(table.column("rho_a_ohm_m"))
    strategies = table.column("strategy")
    for strat in sorted(set(strategies)):
        sel = np.array([s == strat for s in strategies])
        order = np.argsort(depths[sel])
        ax.plot(depths[sel][order], rhos[sel][order], "o-", label=strat)
    if rho is not None and len(depths):
        from .survey import analytic_wenner_insulating

        a = table.metadata["spacing_m"]
        hs = np.linspace(depths.min(), depths.max(), 120)
        ax.plot(hs, [analytic_wenner_insulating(rho, a, h) for h in hs],
                "k--", label="layer over insulator")
    ax.legend()
    fig.savefig(path, dpi=150)
    return path


def histogram_figure(table, path) -> Path:
    """Apparent-resistivity histogram of an uncertainty sweep."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = _axes("apparent resistivity under setup perturbations",
                    "rho_a (ohm m)", "runs")
    counts = table.metadata.get("histogram_counts", [])
    edges = table.metadata.get("histogram_edges", [])
    if counts:
        edges = np.asarray(edges, dtype=float)
        ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge",
               edgecolor="black", alpha=0.8)
    fig.savefig(path, dpi=150)
    return path


def analytic_figure(rows, path) -> Path:
    """Reference curve rho_a(h) from (depth, rho_a) pairs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = _axes("layer over insulator, analytic",
                    "liner depth (m)", "rho_a (ohm m)")
    hs = [r[0] for r in rows]
    vals = [r[1] for r in rows]
    ax.plot(hs, vals, "o-")
    fig.savefig(path, dpi=150)
    return path

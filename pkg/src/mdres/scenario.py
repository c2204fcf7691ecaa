"""Scenario orchestration: a declarative configuration (domain, water
conductivity, liner geometry, survey, scheme) turned into a mixed-
dimensional grid, assembled, solved and reduced to an apparent
resistivity.

The mesh recipe is deliberately rigid so that parameter sweeps compare
like with like:

* electrode columns are forced into the lattice by required planes at
  xe +- h/2 along the array axis and at ye - h/4 / ye + 3h/4 across it
  (h = near-array cell size), which keeps every rod strictly inside a
  column of cells and off the diagonal cut planes of the hexahedra;
* vertical resolution comes from explicit z bands, so every liner depth
  of a sweep lands on the same 5 mm lattice and the bulk mesh is
  literally identical across depths (only the split plane moves);
* the truncated variant rebuilds the box from the liner plane up with
  the same absolute breakpoints, so the retained water volume is
  meshed identically to the full-domain variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .coupling import (assemble_electrode, assemble_global, assemble_liner,
                       exchange_currents, peaceman_conductance)
from .errors import ConfigError
from .fvscheme import MaterialField, mpfa_o_assemble, tpfa_assemble
from .mdgrid import (LinerHole, LinerPanel, LinerSpec, MixedDimGrid,
                     build_box_mesh, build_line_mesh, embed_liner)
from .solver import check_balance, solve_gauged
from .spatial import _tet_halfspaces, adt_build, map_electrode
from .survey import SurveyConfig, apparent_resistivity, build_wenner

__all__ = [
    "LinerConfig",
    "ScenarioConfig",
    "ScenarioResult",
    "box_panels",
    "tank_scenario",
    "box_scenario",
    "build_grid",
    "run_scenario",
    "with_liner_depth",
    "with_perturbation",
]

_HOLE_SIZE = 0.0025          # in-plane cell size around liner holes, m
_SNAP = 0.001                # uncertainty-lattice pitch, m


@dataclass(frozen=True)
class LinerConfig:
    """Liner material and geometry. Either a horizontal sheet given by
    its depth below the water surface (covering the full cross section)
    or an explicit list of axis-aligned panels."""

    thickness: float = 1e-3
    sigma: float = 1e-9
    depth: float | None = None
    panels: tuple[LinerPanel, ...] = ()
    holes: tuple[LinerHole, ...] = ()

    def __post_init__(self):
        if self.thickness <= 0 or self.sigma <= 0:
            raise ConfigError("liner.thickness and liner.sigma must be positive")
        if (self.depth is None) == (len(self.panels) == 0):
            raise ConfigError("liner needs exactly one of depth or panels")
        if self.depth is not None and self.depth <= 0:
            raise ConfigError("liner.depth must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one forward run needs, SI units throughout."""

    extents: tuple[float, float, float]
    sigma: float
    survey: SurveyConfig
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    cell_size: float = 0.04
    near_size: float = 0.012
    near_margin: float = 0.03
    z_bands: tuple[tuple[float, float, float], ...] | None = None
    refinement_regions: tuple = ()
    liner: LinerConfig | None = None
    truncate: bool = False
    scheme: str = "mpfa"
    gauge: str = "null-average"
    explicit_mortars: bool = False
    name: str = "run"
    out_dir: str | None = None

    def __post_init__(self):
        if self.scheme not in ("tpfa", "mpfa"):
            raise ConfigError(f"scheme must be tpfa or mpfa, got {self.scheme!r}")
        if self.gauge not in ("pin", "null-average"):
            raise ConfigError(f"gauge must be pin or null-average, got {self.gauge!r}")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.cell_size <= 0 or self.near_size <= 0:
            raise ConfigError("cell_size and near_size must be positive")
        if self.truncate:
            if self.liner is None or self.liner.depth is None:
                raise ConfigError("truncate requires a liner given by depth")
            if self.liner.holes:
                raise ConfigError("truncate cannot represent liner holes")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        return _config_from_dict(data)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        import yaml

        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        return _config_from_dict(data)


# --------------------------------------------------------------------------
# config parsing


def _take(d: dict, key: str, path: str, default=...):
    if key not in d:
        if default is ...:
            raise ConfigError(f"missing required field {path}{key}")
        return default
    return d.pop(key)


def _no_leftovers(d: dict, path: str) -> None:
    if d:
        raise ConfigError(f"unknown field {path}{sorted(d)[0]}")


def _triple(v, path: str) -> tuple[float, float, float]:
    try:
        t = tuple(float(x) for x in v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path} must be three numbers") from exc
    if len(t) != 3:
        raise ConfigError(f"{path} must be three numbers")
    return t


def _survey_from_dict(d: dict, path: str) -> SurveyConfig:
    d = dict(d)
    center = _take(d, "center", path)
    kw = {}
    for key in ("spacing", "radius", "length", "sigma_rod", "skin", "current"):
        if key in d:
            kw[key] = float(_take(d, key, path))
    if "spacing" not in kw:
        raise ConfigError(f"missing required field {path}spacing")
    if "axis" in d:
        kw["axis"] = _take(d, "axis", path)
    if "segments" in d:
        kw["segments"] = int(_take(d, "segments", path))
    if "roles" in d:
        kw["roles"] = tuple(_take(d, "roles", path))
    _no_leftovers(d, path)
    try:
        return SurveyConfig(center=(float(center[0]), float(center[1])), **kw)
    except (TypeError, IndexError) as exc:
        raise ConfigError(f"{path}center must be two numbers") from exc


def _liner_from_dict(d: dict, path: str) -> LinerConfig:
    d = dict(d)
    kw = {"thickness": float(_take(d, "thickness", path, 1e-3)),
          "sigma": float(_take(d, "sigma", path, 1e-9))}
    panels: list[LinerPanel] = []
    if "depth" in d:
        kw["depth"] = float(_take(d, "depth", path))
    if "box" in d:
        b = dict(_take(d, "box", path))
        corner = _triple(_take(b, "corner", path + "box."), path + "box.corner")
        size = _triple(_take(b, "size", path + "box."), path + "box.size")
        _no_leftovers(b, path + "box.")
        panels.extend(box_panels(corner, size))
    for i, p in enumerate(_take(d, "panels", path, [])):
        p = dict(p)
        ppath = f"{path}panels[{i}]."
        panels.append(LinerPanel(
            axis=int(_take(p, "axis", ppath)),
            position=float(_take(p, "position", ppath)),
            lo=tuple(float(x) for x in _take(p, "lo", ppath)),
            hi=tuple(float(x) for x in _take(p, "hi", ppath))))
        _no_leftovers(p, ppath)
    if panels:
        kw["panels"] = tuple(panels)
    holes = []
    for i, h in enumerate(_take(d, "holes", path, [])):
        h = dict(h)
        hpath = f"{path}holes[{i}]."
        holes.append(LinerHole(center=_triple(_take(h, "center", hpath), hpath + "center"),
                               radius=float(_take(h, "radius", hpath))))
        _no_leftovers(h, hpath)
    kw["holes"] = tuple(holes)
    _no_leftovers(d, path)
    return LinerConfig(**kw)


def _config_from_dict(data: dict) -> ScenarioConfig:
    d = dict(data)
    extents = _triple(_take(d, "extents", ""), "extents")
    sigma = float(_take(d, "sigma", ""))
    sd = _take(d, "survey", "")
    if not isinstance(sd, dict):
        raise ConfigError("survey must be a mapping")
    survey = _survey_from_dict(sd, "survey.")
    kw: dict = {}
    if "origin" in d:
        kw["origin"] = _triple(_take(d, "origin", ""), "origin")
    for key in ("cell_size", "near_size", "near_margin"):
        if key in d:
            kw[key] = float(_take(d, key, ""))
    if "z_bands" in d:
        bands = _take(d, "z_bands", "")
        kw["z_bands"] = tuple(
            (float(b[0]), float(b[1]), float(b[2])) for b in bands)
    if "refinement_regions" in d:
        regs = _take(d, "refinement_regions", "")
        kw["refinement_regions"] = tuple(
            (_triple(r[0], f"refinement_regions[{i}]"),
             _triple(r[1], f"refinement_regions[{i}]"), float(r[2]))
            for i, r in enumerate(regs))
    if "liner" in d:
        ld = _take(d, "liner", "")
        if ld is not None:
            if not isinstance(ld, dict):
                raise ConfigError("liner must be a mapping or null")
            kw["liner"] = _liner_from_dict(ld, "liner.")
    for key in ("truncate", "explicit_mortars"):
        if key in d:
            kw[key] = bool(_take(d, key, ""))
    for key in ("scheme", "gauge", "name", "out_dir"):
        if key in d:
            kw[key] = _take(d, key, "")
    _no_leftovers(d, "")
    return ScenarioConfig(extents=extents, sigma=sigma, survey=survey, **kw)


# --------------------------------------------------------------------------
# laboratory presets


def box_panels(corner: tuple[float, float, float],
               size: tuple[float, float, float]) -> tuple[LinerPanel, ...]:
    """Five panels of an open-top box: bottom plus four walls."""
    x0, y0, z0 = corner
    sx, sy, sz = size
    return (
        LinerPanel(axis=2, position=z0, lo=(x0, y0), hi=(x0 + sx, y0 + sy)),
        LinerPanel(axis=0, position=x0, lo=(y0, z0), hi=(y0 + sy, z0 + sz)),
        LinerPanel(axis=0, position=x0 + sx, lo=(y0, z0), hi=(y0 + sy, z0 + sz)),
        LinerPanel(axis=1, position=y0, lo=(x0, z0), hi=(x0 + sx, z0 + sz)),
        LinerPanel(axis=1, position=y0 + sy, lo=(x0, z0), hi=(x0 + sx, z0 + sz)),
    )


def tank_scenario(spacing: float = 0.03, depth: float | None = None, *,
                  extents=(0.52, 0.34, 0.40), center=(0.26, 0.17),
                  sigma: float = 1.0 / 29.0, scheme: str = "mpfa",
                  truncate: bool = False, cell_size: float = 0.04,
                  near_size: float = 0.012, **kw) -> ScenarioConfig:
    """Water tank with an optional horizontal liner sheet at the given
    depth. The default z band pins a 5 mm lattice over the top 13 cm so
    all sweep depths down to 12 cm share one bulk mesh."""
    survey = SurveyConfig(center=center, spacing=spacing)
    liner = LinerConfig(depth=depth) if depth is not None else None
    bands = kw.pop("z_bands", ((extents[2] - 0.13, extents[2], 0.005),))
    return ScenarioConfig(extents=extents, sigma=sigma, survey=survey,
                          liner=liner, truncate=truncate, scheme=scheme,
                          cell_size=cell_size, near_size=near_size,
                          z_bands=bands, **kw)


_BOX_CORNER = (0.205, 0.105, 0.072)
_BOX_SIZE = (0.20, 0.14, 0.072)
_BOX_HOLE = LinerHole(center=(0.255, 0.185, 0.072), radius=0.0025)
# case i centers the array in the box; ii and iii straddle the wall on
# the tank mid-line y = 0.17, C1 (ii) or P1 (iii) one cm outside it and
# the nearest potential rod over the hole column x = 0.255. Every rod
# keeps >= 1 cm of wall clearance so the +-6 mm electrode shifts of the
# uncertainty study never flip a rod to the other side.
_BOX_CASES = {"i": ((0.305, 0.175), 0.03),
              "ii": ((0.285, 0.17), 0.06),
              "iii": ((0.225, 0.17), 0.06)}


def box_scenario(case: str = "i", hole: bool = True,
                 scheme: str = "mpfa", **kw) -> ScenarioConfig:
    """Open-top liner box standing in the tank, water level at the rim.

    Cases move the array from fully inside the box ("i", a = 3 cm) to
    one ("ii") or two ("iii") electrodes outside it (a = 6 cm).
    """
    if case not in _BOX_CASES:
        raise ConfigError(f"box case must be one of {sorted(_BOX_CASES)}")
    (cx, cy), a = _BOX_CASES[case]
    liner = LinerConfig(panels=box_panels(_BOX_CORNER, _BOX_SIZE),
                        holes=(_BOX_HOLE,) if hole else ())
    survey = SurveyConfig(center=(cx, cy), spacing=a)
    return ScenarioConfig(extents=(0.52, 0.34, 0.144), sigma=1.0 / 24.0,
                          survey=survey, liner=liner, scheme=scheme,
                          name=f"box_{case}", **kw)


# --------------------------------------------------------------------------
# sweep transforms


def with_liner_depth(config: ScenarioConfig, depth: float,
                     strategy: str = "interface") -> ScenarioConfig:
    """Sweep variant of a config: liner sheet at the given depth, either
    embedded as an interface or with the domain cut off at its plane.

    The depth must land on the z-band lattice, otherwise every sweep
    point would get its own slightly different mesh and the trend would
    carry mesh noise.
    """
    if strategy not in ("interface", "truncate"):
        raise ConfigError(f"strategy must be interface or truncate, got {strategy!r}")
    ztop = config.origin[2] + config.extents[2]
    bands = tuple(config.z_bands or ((ztop - 0.13, ztop, 0.005),))
    z = ztop - float(depth)
    on_lattice = any(
        lo - 1e-9 <= z <= hi + 1e-9
        and abs((z - lo) / s - round((z - lo) / s)) < 1e-6
        for lo, hi, s in bands)
    if not on_lattice:
        raise ConfigError(f"liner depth {depth} does not land on the z-band lattice")
    liner = replace(config.liner or LinerConfig(depth=float(depth)),
                    depth=float(depth), panels=(), holes=())
    return replace(config, liner=liner, z_bands=bands,
                   truncate=(strategy == "truncate"),
                   name=f"{config.name}_h{depth:g}_{strategy}")


def with_perturbation(config: ScenarioConfig, offsets: tuple
                      ) -> tuple[ScenarioConfig, tuple]:
    """Apply (water level, resistivity, hole radius, shift x, shift y)
    offsets to a base config.

    Water-level and electrode-shift offsets snap to a 1 mm lattice. A
    5 mm z band anchored 25 mm below the nominal surface spans every
    snapped level, so the lattice below the anchor stays identical
    across the sweep and only the top layers retile. The liner stays
    fixed in space, so a water-level change also changes its depth
    below the surface. Returns the perturbed config and the as-run
    values (water level, sigma, hole radius, center x, center y).
    """
    dw, drho, dhole, dsx, dsy = (float(v) for v in offsets)
    ztop0 = config.origin[2] + config.extents[2]
    dws = round(dw / _SNAP) * _SNAP
    dsxs = round(dsx / _SNAP) * _SNAP
    dsys = round(dsy / _SNAP) * _SNAP
    if 1.0 / config.sigma + drho <= 0:
        raise ConfigError("resistivity offset drives the water resistivity below zero")
    sigma = 1.0 / (1.0 / config.sigma + drho)
    bands = tuple(config.z_bands or ())
    bands += ((ztop0 - 0.025, ztop0 + max(dws, 0.0) + _SNAP, 0.005),)
    extents = (config.extents[0], config.extents[1], config.extents[2] + dws)
    center = (config.survey.center[0] + dsxs, config.survey.center[1] + dsys)
    survey = replace(config.survey, center=center)
    liner = config.liner
    hole_r = float("nan")
    if liner is not None:
        if liner.depth is not None:
            # the sheet sits at fixed z, its depth below the surface moves
            liner = replace(liner, depth=liner.depth + dws)
        if liner.holes:
            holes = tuple(LinerHole(center=h.center, radius=h.radius + dhole)
                          for h in liner.holes)
            liner = replace(liner, holes=holes)
            hole_r = holes[0].radius
    cfg = replace(config, extents=extents, z_bands=bands, survey=survey,
                  liner=liner, sigma=sigma)
    return cfg, (ztop0 + dws, sigma, hole_r, center[0], center[1])


# --------------------------------------------------------------------------
# build and run


def _effective_domain(config: ScenarioConfig):
    """Origin and extents actually meshed; truncation cuts at the liner."""
    if config.truncate:
        depth = config.liner.depth
        oz = config.origin[2] + config.extents[2] - depth
        return ((config.origin[0], config.origin[1], oz),
                (config.extents[0], config.extents[1], depth))
    return config.origin, config.extents


def _liner_panels(config: ScenarioConfig) -> list[LinerPanel]:
    ln = config.liner
    if ln.depth is not None:
        z = config.origin[2] + config.extents[2] - ln.depth
        return [LinerPanel(axis=2, position=z,
                           lo=(config.origin[0], config.origin[1]),
                           hi=(config.origin[0] + config.extents[0],
                               config.origin[1] + config.extents[1]))]
    return list(ln.panels)


def _mesh_inputs(config: ScenarioConfig):
    origin, extents = _effective_domain(config)
    ztop = origin[2] + extents[2]
    sv = config.survey
    h = config.near_size
    planes: dict[str, list[float]] = {"x": [], "y": [], "z": []}
    bands: dict[str, list[tuple]] = {"x": [], "y": [], "z": []}

    # electrode columns: rods at relative (1/2, 1/4) of their cell, off
    # every diagonal cut plane of the hexahedra
    pos = sv.positions()
    row, cross = ("x", "y") if sv.axis == "x" else ("y", "x")
    ri, ci = "xy".index(row), "xy".index(cross)
    for p in pos:
        planes[row] += [p[ri] - h / 2, p[ri] + h / 2]
        planes[cross] += [p[ci] - h / 4, p[ci] + 3 * h / 4]
    m = config.near_margin
    bands[row].append((pos[:, ri].min() - m, pos[:, ri].max() + m, h))
    bands[cross].append((pos[:, ci].min() - m, pos[:, ci].max() + m, h))

    if config.z_bands is not None:
        bands["z"] += [tuple(b) for b in config.z_bands]
    else:
        bands["z"].append((ztop - 0.02, ztop, 0.005))
        if config.liner is not None and not config.truncate:
            for p in _liner_panels(config):
                if p.axis == 2:
                    bands["z"].append((p.position - 0.01, p.position + 0.01, 0.005))

    if config.liner is not None and not config.truncate:
        for p in _liner_panels(config):
            axes = "xyz"
            planes[axes[p.axis]].append(p.position)
            o1, o2 = (k for k in range(3) if k != p.axis)
            planes[axes[o1]] += [p.lo[0], p.hi[0]]
            planes[axes[o2]] += [p.lo[1], p.hi[1]]
        for hole in config.liner.holes:
            pad = hole.radius + 2 * _HOLE_SIZE
            for k in range(3):
                bands["xyz"[k]].append((hole.center[k] - pad,
                                        hole.center[k] + pad, _HOLE_SIZE))
    return origin, extents, planes, bands


def build_grid(config: ScenarioConfig):
    """Mesh the scenario: bulk lattice, embedded liner, mapped rods.

    Returns the mixed-dimensional grid and the four electrode specs in
    position order.
    """
    origin, extents, planes, bands = _mesh_inputs(config)
    mesh3 = build_box_mesh(extents, config.cell_size,
                           refinement_regions=list(config.refinement_regions),
                           required_planes=planes, origin=origin,
                           axis_bands=bands)
    if config.liner is not None and not config.truncate:
        spec = LinerSpec(panels=_liner_panels(config),
                         thickness=config.liner.thickness,
                         sigma=config.liner.sigma,
                         holes=list(config.liner.holes))
        grid = embed_liner(mesh3, spec)
    else:
        grid = MixedDimGrid(bulk=mesh3)

    surface = origin[2] + extents[2]
    lo = np.array(origin)
    bounds = np.stack([lo, lo + np.array(extents)], axis=1)
    especs = build_wenner(config.survey, surface, bounds)
    adt = adt_build(grid.bulk)
    for es in especs:
        mesh1 = build_line_mesh(es.polyline, config.survey.segments)
        grid.add_electrode(mesh1, map_electrode(mesh1, grid.bulk, adt))
    return grid, especs


def _electrode_clearance(grid: MixedDimGrid) -> float:
    """Smallest lateral distance from any rod axis to a wall of its host
    cells, sampled along the rods. Faces crossed head-on (normal within
    25 degrees of vertical) do not count; rods cross those by design."""
    best = math.inf
    for mesh1, smap in zip(grid.electrodes, grid.mortar_electrodes):
        hs = {int(c): _tet_halfspaces(grid.bulk.nodes[grid.bulk.cells[c]])
              for c in smap.bulk_cells()}
        segs = mesh1.nodes[mesh1.cells]
        ts = np.linspace(0.05, 0.95, 7)
        pts = (segs[:, 0, None, :] * (1 - ts)[None, :, None]
               + segs[:, 1, None, :] * ts[None, :, None]).reshape(-1, 3)
        for q in pts:
            for normals, anchors, _ in hs.values():
                d = np.einsum("ij,ij->i", normals, q[None, :] - anchors)
                if np.all(d <= 1e-12):            # q inside this tet
                    lateral = np.abs(normals[:, 2]) < 0.9
                    if lateral.any():
                        best = min(best, float((-d[lateral]).min()))
    return best


@dataclass
class ScenarioResult:
    """One forward run: grid, raw solution and derived quantities."""

    config: ScenarioConfig
    grid: MixedDimGrid
    solution: object
    apparent: object
    balance: object
    operators: dict
    n_cells: dict[str, int]
    diagnostics: dict = field(default_factory=dict)


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    """Build, assemble, solve and evaluate one scenario."""
    grid, especs = build_grid(config)
    bulk = grid.bulk
    assemble = mpfa_o_assemble if config.scheme == "mpfa" else tpfa_assemble
    bulk_op = assemble(bulk, MaterialField.constant(config.sigma, bulk.n_cells))

    operators = {"bulk": bulk_op}
    blocks = []
    liner_op = None
    if grid.liner is not None:
        # in-plane sheet conductance: thickness times conductivity
        lmat = MaterialField.constant(
            config.liner.thickness * config.liner.sigma, grid.liner.n_cells)
        liner_op = assemble(grid.liner, lmat)
        operators["liner"] = liner_op
        blocks.append(assemble_liner(grid.mortar_liner, config.liner.sigma,
                                     config.liner.thickness, bulk_op))

    e_ops = []
    injections = []
    for i, (es, mesh1, smap) in enumerate(zip(especs, grid.electrodes,
                                              grid.mortar_electrodes)):
        area_sigma = math.pi * es.radius ** 2 * es.sigma_rod
        eop = tpfa_assemble(mesh1, MaterialField.constant(area_sigma, mesh1.n_cells))
        sg = np.array([peaceman_conductance(config.sigma, es.radius,
                                            bulk.cell_diameters[cell], es.skin)
                       for _, cell, _ in smap.entries])
        blocks.append(assemble_electrode(smap, sg, eop))
        operators[f"electrode{i}"] = eop
        e_ops.append(eop)
        injections.append(es.current)

    system = assemble_global(bulk_op, liner_op, e_ops, blocks, injections,
                             explicit_mortars=config.explicit_mortars)
    if config.scheme == "mpfa":
        # two-point twin on the same dofs: a narrow surrogate whose ILU
        # preconditions the wide-stencil solve (rods and coupling blocks
        # are shared, only bulk and liner operators are swapped)
        bulk_tw = tpfa_assemble(bulk,
                                MaterialField.constant(config.sigma,
                                                       bulk.n_cells))
        liner_tw = None
        if grid.liner is not None:
            liner_tw = tpfa_assemble(grid.liner, lmat)
        twin = assemble_global(bulk_tw, liner_tw, e_ops, blocks, injections,
                               explicit_mortars=config.explicit_mortars)
        system.precond = twin.matrix
    sol = solve_gauged(system, config.gauge)
    exchange_currents(sol)
    bal = check_balance(sol, {f"electrode{i}": es.current
                              for i, es in enumerate(especs)})
    sol.balance = bal
    app = apparent_resistivity(sol, config.survey)

    n_cells = {name: mesh.n_cells for name, mesh in grid.subdomains().items()}
    diag = {
        "dofs": system.layout.n_total,
        "electrode_clearance_m": _electrode_clearance(grid),
        "hole_area_m2": grid.realized_hole_area,
        "rel_residual": sol.rel_residual,
        "max_cell_residual_a": bal.max_cell_residual,
    }
    return ScenarioResult(config=config, grid=grid, solution=sol, apparent=app,
                          balance=bal, operators=operators, n_cells=n_cells,
                          diagnostics=diag)

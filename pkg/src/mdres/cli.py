"""Configuration-driven batch front end.

    mdres mesh|solve|sweep|analytic --config file.yaml [--scheme S]
                                    [--jobs N] [--out DIR]

The config file is one YAML mapping with the scenario fields (SI units
only) plus optional `sweep:` and `analytic:` sections consumed here.
Exit codes: 0 success, 1 bad configuration, 2 numerical failure,
3 output I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, InvalidSurvey, MdresError, ParseError
from .mdgrid import load_msh, save_msh
from .report import (analytic_figure, depth_figure, histogram_figure,
                     write_csv)
from .scenario import ScenarioConfig, run_scenario, build_grid
from .survey import (PerturbationSpec, analytic_wenner_insulating,
                     depth_sweep, uncertainty_sweep)
from .vtkio import export_solution

__all__ = ["main"]


def _load(path: str):
    """Config file -> (ScenarioConfig, sweep section, analytic section)."""
    import yaml

    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    sweep = data.pop("sweep", None)
    analytic = data.pop("analytic", None)
    for name, section in (("sweep", sweep), ("analytic", analytic)):
        if section is not None and not isinstance(section, dict):
            raise ConfigError(f"{name} section must be a mapping")
    return ScenarioConfig.from_dict(data), sweep, analytic


def _out_dir(args, config: ScenarioConfig) -> Path:
    out = Path(args.out or config.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mesh(args) -> int:
    config, _, _ = _load(args.config)
    if args.scheme:
        config = replace(config, scheme=args.scheme)
    out = _out_dir(args, config)
    grid, _ = build_grid(config)
    rows = []
    for name, mesh in grid.subdomains().items():
        path = out / f"{config.name}_{name}.msh"
        save_msh(mesh, path)
        load_msh(path)  # fail loudly if the file does not round-trip
        rows.append((name, mesh.dim, mesh.n_cells, mesh.n_faces,
                     float(mesh.cell_volumes.sum()), str(path)))
    write_csv(out / f"{config.name}_mesh.csv",
              ["subdomain", "dim", "cells", "faces", "measure", "path"], rows)
    from .scenario import _electrode_clearance

    clear = _electrode_clearance(grid)
    write_csv(out / f"{config.name}_mesh_diagnostics.csv",
              ["electrode_clearance_m", "hole_area_m2"],
              [(clear, grid.realized_hole_area)])
    print(f"wrote {len(rows)} subdomain meshes to {out}")
    print(f"min electrode-to-cell-boundary distance: {clear:.6e} m")
    return 0


def cmd_solve(args) -> int:
    config, _, _ = _load(args.config)
    if args.scheme:
        config = replace(config, scheme=args.scheme)
    out = _out_dir(args, config)
    result = run_scenario(config)
    app, bal = result.apparent, result.balance
    write_csv(out / f"{config.name}_solve.csv",
              ["name", "scheme", "gauge", "rho_a_ohm_m", "delta_phi_v",
               "k_m", "current_a", "injected_in_a", "injected_out_a",
               "max_cell_residual_a", "rel_residual", "bulk_cells", "dofs"],
              [(config.name, config.scheme, config.gauge, app.value,
                app.delta_phi, app.k, app.current, bal.injected_in,
                bal.injected_out, bal.max_cell_residual, result.diagnostics[
                    "rel_residual"], result.n_cells["bulk"],
                result.diagnostics["dofs"])])
    paths = export_solution(result, out, basename=config.name)
    print(f"rho_a = {app.value:.6f} ohm m  (delta_phi = {app.delta_phi:.6e} V, "
          f"max cell residual = {bal.max_cell_residual:.3e} A)")
    print(f"wrote {len(paths)} VTK files and 1 CSV to {out}")
    return 0


def _depth_sweep(config, section, out, jobs) -> int:
    depths = [float(h) for h in _field(section, "depths")]
    strategies = section.pop("strategies", ["interface", "truncate"])
    if isinstance(strategies, str):
        strategies = [strategies]
    _done(section)
    table = depth_sweep(config, depths, strategies=tuple(strategies),
                        jobs=jobs)
    path = write_csv(out / f"{config.name}_depth_sweep.csv",
                     table.columns, table.rows)
    if table.rows:
        depth_figure(table, out / f"{config.name}_depth_sweep.png",
                     rho=1.0 / config.sigma)
    print(f"wrote {len(table.rows)} rows to {path}")
    return 0


def _uncertainty_sweep(config, section, out, jobs) -> int:
    pspec = PerturbationSpec(
        water_level=tuple(section.pop("water_level", (0.0,))),
        resistivity=tuple(section.pop("resistivity", (0.0,))),
        hole_radius=tuple(section.pop("hole_radius", (0.0,))),
        shift_x=tuple(section.pop("shift_x", (0.0,))),
        shift_y=tuple(section.pop("shift_y", (0.0,))))
    mode = section.pop("mode", "factorial")
    samples = int(section.pop("samples", 0))
    seed = int(section.pop("seed", 0))
    bins = int(section.pop("bins", 10))
    _done(section)
    table = uncertainty_sweep(config, pspec, jobs=jobs, bins=bins,
                              mode=mode, samples=samples, seed=seed)
    path = write_csv(out / f"{config.name}_uncertainty_sweep.csv",
                     table.columns, table.rows)
    if table.rows:
        histogram_figure(table, out / f"{config.name}_uncertainty_sweep.png")
    print(f"wrote {len(table.rows)} rows to {path}")
    return 0


def _field(section: dict, key: str):
    if key not in section:
        raise ConfigError(f"missing required field sweep.{key}")
    return section.pop(key)


def _done(section: dict) -> None:
    if section:
        raise ConfigError(f"unknown field sweep.{sorted(section)[0]}")


def cmd_sweep(args) -> int:
    config, section, _ = _load(args.config)
    if args.scheme:
        config = replace(config, scheme=args.scheme)
    if section is None:
        raise ConfigError("missing required section sweep")
    out = _out_dir(args, config)
    section = dict(section)
    kind = section.pop("kind", "depth")
    if kind == "depth":
        return _depth_sweep(config, section, out, args.jobs)
    if kind == "uncertainty":
        return _uncertainty_sweep(config, section, out, args.jobs)
    raise ConfigError(f"sweep.kind must be depth or uncertainty, got {kind!r}")


def cmd_analytic(args) -> int:
    config, sweep, section = _load(args.config)
    section = dict(section or {})
    rho = float(section.pop("rho", 1.0 / config.sigma))
    spacing = float(section.pop("spacing", config.survey.spacing))
    depths = section.pop("depths", None)
    if depths is None and sweep:
        depths = sweep.get("depths")
    if depths is None:
        raise ConfigError("missing required field analytic.depths")
    if section:
        raise ConfigError(f"unknown field analytic.{sorted(section)[0]}")
    out = _out_dir(args, config)
    rows = [(float(h), analytic_wenner_insulating(rho, spacing, float(h)))
            for h in depths]
    path = write_csv(out / f"{config.name}_analytic.csv",
                     ["depth_m", "rho_a_ohm_m"], rows)
    if rows:
        analytic_figure(rows, out / f"{config.name}_analytic.png")
    print(f"wrote {len(rows)} rows to {path}")
    return 0


_COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "sweep": cmd_sweep,
             "analytic": cmd_analytic}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdres", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML scenario file")
        sp.add_argument("--scheme", choices=("tpfa", "mpfa"), default=None,
                        help="override the config's scheme")
        sp.add_argument("--jobs", type=int, default=1,
                        help="concurrent solves in sweeps (default 1)")
        sp.add_argument("--out", default=None,
                        help="output directory (default: config out_dir or .)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ParseError, InvalidSurvey) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except MdresError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Wenner-alpha surveys: array construction, apparent resistivity, the
analytic layer-over-insulator reference, and sweep drivers.

A survey is four vertical rod electrodes on the water surface along one
axis, at offsets -3a/2, -a/2, +a/2, +3a/2 from the array center. The
outer pair injects +-i, the inner pair measures, and

    rho_a = 2 pi a (phi_P1 - phi_P2) / i

with the potentials read at the top 1D cell of each measuring rod.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .coupling import ElectrodeSpec
from .errors import InvalidSurvey

__all__ = [
    "SurveyConfig",
    "ApparentResistivity",
    "PerturbationSpec",
    "SweepTable",
    "build_wenner",
    "apparent_resistivity",
    "analytic_wenner_insulating",
    "depth_sweep",
    "uncertainty_sweep",
]

_ROLES = ("C1", "P1", "P2", "C2")
# reciprocal layout: current on the inner pair, potential on the outer;
# the geometric factor works out to 2 pi a in both layouts
_RECIPROCAL = ("P1", "C1", "C2", "P2")


@dataclass(frozen=True)
class SurveyConfig:
    """Wenner-alpha array: center (x, y) in m, spacing a in m, axis "x"
    or "y", rod template (radius, length, sigma_rod, skin) and the
    injected current in A. roles maps the four positions (in increasing
    offset order) to electrode roles."""

    center: tuple[float, float]
    spacing: float
    axis: str = "x"
    radius: float = 1e-3
    length: float = 5e-3
    sigma_rod: float = 1.45e6
    skin: float = 0.0
    current: float = 0.01
    segments: int = 4
    roles: tuple[str, str, str, str] = _ROLES

    def __post_init__(self):
        if self.spacing <= 0:
            raise InvalidSurvey("electrode spacing must be positive")
        if self.current == 0:
            raise InvalidSurvey("injected current must be nonzero")
        if self.axis not in ("x", "y"):
            raise InvalidSurvey(f"survey axis must be 'x' or 'y', got {self.axis!r}")
        if self.radius <= 0 or self.length <= 0 or self.sigma_rod <= 0:
            raise InvalidSurvey("rod radius, length and conductivity must be positive")
        if self.segments < 1:
            raise InvalidSurvey("rods need at least one segment")
        if sorted(self.roles) != sorted(_ROLES):
            raise InvalidSurvey(f"roles must be a permutation of {_ROLES}")

    def positions(self) -> np.ndarray:
        """(4, 2) xy electrode positions in increasing offset order."""
        off = np.array([-1.5, -0.5, 0.5, 1.5]) * self.spacing
        ax = 0 if self.axis == "x" else 1
        pos = np.tile(np.asarray(self.center, dtype=float), (4, 1))
        pos[:, ax] += off
        return pos

    def reciprocal(self) -> "SurveyConfig":
        """Swap the current and potential pairs in place."""
        flip = {"C1": "P1", "P1": "C1", "P2": "C2", "C2": "P2"}
        return replace(self, roles=tuple(flip[r] for r in self.roles))


def build_wenner(config: SurveyConfig, surface: float,
                 bounds: np.ndarray | None = None) -> list[ElectrodeSpec]:
    """Four rod electrodes hanging from z = surface, in position order.

    bounds, when given as ((xmin, xmax), (ymin, ymax), (zmin, zmax)),
    must strictly contain every rod; violations raise InvalidSurvey.
    """
    specs = []
    for (x, y), role in zip(config.positions(), config.roles):
        if bounds is not None:
            b = np.asarray(bounds, dtype=float)
            inside = (b[0, 0] < x < b[0, 1] and b[1, 0] < y < b[1, 1]
                      and b[2, 0] < surface - config.length and surface <= b[2, 1])
            if not inside:
                raise InvalidSurvey(
                    f"electrode {role} at ({x:.4f}, {y:.4f}) does not fit the domain")
        current = {"C1": config.current, "C2": -config.current}.get(role, 0.0)
        specs.append(ElectrodeSpec(
            polyline=np.array([[x, y, surface], [x, y, surface - config.length]]),
            radius=config.radius, length=config.length,
            sigma_rod=config.sigma_rod, skin=config.skin,
            role="current" if role in ("C1", "C2") else "potential",
            current=current))
    return specs


@dataclass(frozen=True)
class ApparentResistivity:
    """rho_a = k * delta_phi / current, all fields redundant on purpose."""

    value: float
    delta_phi: float
    k: float
    current: float


def apparent_resistivity(solution, config: SurveyConfig) -> ApparentResistivity:
    """Evaluate rho_a from the top-cell potentials of the measuring rods.

    Electrode subdomains must be named electrode0..3 in the position
    order of config.roles (the order build_wenner produced them in).
    """
    tops = {}
    for i, role in enumerate(config.roles):
        name = f"electrode{i}"
        if name not in solution.potentials:
            raise InvalidSurvey(f"solution lacks the {name} subdomain for role {role}")
        tops[role] = float(solution.potentials[name][0])
    k = 2.0 * math.pi * config.spacing
    dphi = tops["P1"] - tops["P2"]
    return ApparentResistivity(value=k * dphi / config.current,
                               delta_phi=dphi, k=k, current=config.current)


def analytic_wenner_insulating(rho: float, a: float, h: float,
                               rel_tol: float = 1e-12) -> float:
    """Apparent resistivity of a depth-h layer over a perfect insulator.

    Image-charge series for the Wenner-alpha array on the surface:

        rho_a = rho [1 + 4a sum_n (1/sqrt(a^2 + 4 n^2 h^2)
                                   - 1/sqrt(4 a^2 + 4 n^2 h^2))]

    Terms decay like n^-3, so the partial sum is stopped once the
    current term drops below rel_tol times the running bracket and the
    remainder is closed with the midpoint-rule tail

        sum_{n>N} f(n) ~ int_{N+1/2}^inf f
                       = (ln 2 - asinh(2hM/a) + asinh(hM/a)) / (2h),

    whose error is O(f''(M)), far below rel_tol at the stopping index.
    """
    if rho <= 0 or a <= 0 or h <= 0:
        raise ValueError("rho, a and h must all be positive")
    bracket = 1.0
    n0 = 1
    chunk = 4096
    while True:
        n = np.arange(n0, n0 + chunk, dtype=float)
        term = (1.0 / np.sqrt(a * a + 4.0 * n * n * h * h)
                - 1.0 / np.sqrt(4.0 * a * a + 4.0 * n * n * h * h))
        partial = 4.0 * a * np.cumsum(term)
        bracket += partial[-1]
        if 4.0 * a * term[-1] < rel_tol * bracket:
            break
        n0 += chunk
        chunk = min(2 * chunk, 1 << 20)
    m = n0 + len(term) - 1 + 0.5
    tail = (math.log(2.0) - math.asinh(2.0 * h * m / a)
            + math.asinh(h * m / a)) / (2.0 * h)
    bracket += 4.0 * a * tail
    return rho * bracket


@dataclass(frozen=True)
class PerturbationSpec:
    """Offset grids for the laboratory uncertainty study, SI units.

    Each entry lists absolute offsets from the base configuration;
    (0.0,) leaves that parameter alone. Water-level and electrode-shift
    offsets are snapped to the local mesh lattice before running and the
    snapped values are reported in the output table.
    """

    water_level: tuple[float, ...] = (0.0,)
    resistivity: tuple[float, ...] = (0.0,)
    hole_radius: tuple[float, ...] = (0.0,)
    shift_x: tuple[float, ...] = (0.0,)
    shift_y: tuple[float, ...] = (0.0,)

    def grid(self) -> list[tuple[float, float, float, float, float]]:
        return list(product(self.water_level, self.resistivity,
                            self.hole_radius, self.shift_x, self.shift_y))

    def sample(self, n: int, seed: int = 0) -> list[tuple]:
        """n uniform draws from the hyper-rectangle spanned by the grids."""
        rng = np.random.default_rng(seed)
        axes = (self.water_level, self.resistivity, self.hole_radius,
                self.shift_x, self.shift_y)
        lo = np.array([min(g) for g in axes])
        hi = np.array([max(g) for g in axes])
        draws = lo + (hi - lo) * rng.random((n, 5))
        return [tuple(row) for row in draws]


@dataclass
class SweepTable:
    """Ordered sweep output: column names, one tuple per run, and
    run-level metadata (resolved parameters, reference constants)."""

    columns: list[str]
    rows: list[tuple]
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]


def _run_ordered(tasks, jobs: int):
    """Evaluate tasks (callables) preserving order regardless of jobs."""
    if jobs <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def depth_sweep(config, depths, strategies=("interface", "truncate"),
                jobs: int = 1) -> SweepTable:
    """Solve the scenario once per (liner depth, strategy).

    Strategy "interface" keeps the full domain and embeds the liner as a
    coupled 2D subdomain; "truncate" removes everything below the liner
    plane and relies on the zero-flux boundary instead. Rows are ordered
    by (depth, strategy) independent of execution order.
    """
    from . import scenario  # deferred: scenario builds on this module

    sv = config.survey
    L = 3.0 * sv.spacing
    tasks = []
    keys = []
    for h in depths:
        for strat in strategies:
            cfg = scenario.with_liner_depth(config, float(h), strat)
            keys.append((float(h), strat))
            tasks.append(lambda c=cfg: scenario.run_scenario(c))
    results = _run_ordered(tasks, jobs)
    rows = []
    for (h, strat), res in zip(keys, results):
        rows.append((h, strat, config.scheme, res.apparent.value,
                     res.apparent.delta_phi, res.n_cells["bulk"]))
    return SweepTable(
        columns=["depth_m", "strategy", "scheme", "rho_a_ohm_m",
                 "delta_phi_v", "bulk_cells"],
        rows=rows,
        metadata={
            "spacing_m": sv.spacing,
            "current_a": sv.current,
            # 1D sensitivity-function depths for a homogeneous half
            # space: peak at 0.11 L, median at 0.17 L, L = |C1 C2|
            "sensitivity_peak_depth_m": 0.11 * L,
            "sensitivity_median_depth_m": 0.17 * L,
        })


def uncertainty_sweep(config, pspec: PerturbationSpec, jobs: int = 1,
                      bins: int = 10, mode: str = "factorial",
                      samples: int = 0, seed: int = 0) -> SweepTable:
    """Perturbed solves around a base scenario: the full factorial grid
    of the offset lists, or `samples` uniform draws from their spans.

    Returns one row per perturbation tuple carrying both the requested
    and the snapped (as-run) parameter values plus rho_a, ordered by the
    tuple; metadata holds histogram bin edges and counts over rho_a.
    """
    from . import scenario

    if mode == "factorial":
        tuples = pspec.grid()
    elif mode == "sampled":
        if samples < 1:
            raise ValueError("sampled mode needs samples >= 1")
        tuples = sorted(pspec.sample(samples, seed))
    else:
        raise ValueError(f"unknown sweep mode {mode!r}")
    tasks = []
    keys = []
    for tup in tuples:
        cfg, snapped = scenario.with_perturbation(config, tup)
        keys.append((tup, snapped))
        tasks.append(lambda c=cfg: scenario.run_scenario(c))
    results = _run_ordered(tasks, jobs)
    rows = []
    for (tup, snapped), res in zip(keys, results):
        rows.append(tup + snapped + (res.apparent.value,))
    values = np.array([r[-1] for r in rows])
    counts, edges = np.histogram(values, bins=bins)
    return SweepTable(
        columns=["d_water_m", "d_resistivity_ohm_m", "d_hole_radius_m",
                 "d_shift_x_m", "d_shift_y_m",
                 "water_level_m", "sigma_s_m", "hole_radius_m",
                 "center_x_m", "center_y_m", "rho_a_ohm_m"],
        rows=rows,
        metadata={"histogram_counts": counts.tolist(),
                  "histogram_edges": edges.tolist(),
                  "samples": len(rows)})

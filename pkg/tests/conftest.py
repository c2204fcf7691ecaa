"""Shared fixtures.

The coupled solves are the expensive part, so the handful of scenarios that
several test modules inspect are built once per session.
"""

from __future__ import annotations

import numpy as np
import pytest

from mdres.mdgrid import SubdomainMesh, build_box_mesh
from mdres.scenario import ScenarioConfig, run_scenario, tank_scenario

REFERENCE_TET = np.array([[0.0, 0.0, 0.0],
                          [1.0, 0.0, 0.0],
                          [0.0, 1.0, 0.0],
                          [0.0, 0.0, 1.0]])


def reference_tet_mesh() -> SubdomainMesh:
    return SubdomainMesh(3, REFERENCE_TET, np.array([[0, 1, 2, 3]]),
                         geometry=True)


def mini_config(**kw) -> ScenarioConfig:
    """Laterally shrunk tank whose direct solve takes seconds: the vehicle
    for every coupled-system property test that does not need the full
    geometry."""
    kw.setdefault("extents", (0.40, 0.30, 0.12))
    kw.setdefault("center", (0.20, 0.15))
    kw.setdefault("cell_size", 0.05)
    kw.setdefault("near_size", 0.02)
    kw.setdefault("z_bands", ((0.06, 0.12, 0.01),))
    return tank_scenario(**kw)


@pytest.fixture(scope="session")
def unit_cube48() -> SubdomainMesh:
    return build_box_mesh((1.0, 1.0, 1.0), 0.5)


@pytest.fixture(scope="session")
def mini_result():
    """MPFA solve of the mini tank, no liner."""
    return run_scenario(mini_config())


@pytest.fixture(scope="session")
def mini_liner_result():
    """MPFA solve of the mini tank with a liner sheet 3 cm deep."""
    return run_scenario(mini_config(depth=0.03))

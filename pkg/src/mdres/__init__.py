"""Mixed-dimensional finite-volume forward simulator for direct-current
geoelectrics: a 3D bulk coupled to 1D rod electrodes and a 2D thin
high-contrast liner, discretized with cell-centered finite volumes.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import MdresError
from .mdgrid import MixedDimGrid, SubdomainMesh, build_box_mesh

__all__ = [
    "MdresError",
    "MixedDimGrid",
    "SubdomainMesh",
    "build_box_mesh",
    "__version__",
]

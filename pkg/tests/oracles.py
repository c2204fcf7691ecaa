"""Independent reference computations used by the test suite.

Everything here is derived from the underlying physics or from plain
geometry, on purpose without touching the package internals, so that a test
compares two independent routes to the same number.
"""

from __future__ import annotations

import numpy as np


def wenner_image_charge(rho: float, a: float, h: float,
                        n_images: int = 600_000, current: float = 1.0) -> float:
    """Wenner apparent resistivity over a water layer of thickness h on an
    insulating floor, by brute-force image-charge superposition.

    The free surface and the floor are both insulating, so every mirror
    image carries the source strength unchanged and a surface source is
    replicated at z = +-2nh. Each electrode stack is truncated at the same
    image count; the per-electrode stacks diverge logarithmically but their
    difference is the truncated convergent series, with remainder after N
    paired terms bounded by sum_{n>N} 3a^2/(2(2nh)^3) < 3a^2/(32 h^3 N^2).
    """
    n = np.arange(1, n_images + 1, dtype=float)
    s2 = (2.0 * h * n) ** 2

    def surface_stack(r: float) -> float:
        # 2 pi / (rho I) times the surface potential of one point electrode
        return 1.0 / r + 2.0 * float(np.sum(1.0 / np.sqrt(r * r + s2)))

    # C1/C2 inject +-I at -+3a/2; P1 sits a from C1 and 2a from C2, P2
    # mirrored, so the two measured potentials are opposite
    u_p1 = surface_stack(a) - surface_stack(2.0 * a)
    u_p2 = surface_stack(2.0 * a) - surface_stack(a)
    delta_phi = rho * current / (2.0 * np.pi) * (u_p1 - u_p2)
    rho_a = 2.0 * np.pi * a * delta_phi / current

    # rho_a = rho (1 + 4 a S); propagate the tail bound on S
    tail = 4.0 * a * rho * 3.0 * a * a / (32.0 * h ** 3 * n_images ** 2)
    if tail > 1e-9 * rho_a:
        raise ValueError(f"image count {n_images} too small for h={h}, a={a}")
    return float(rho_a)


def brute_force_box_overlap(boxes: np.ndarray, query: np.ndarray) -> set[int]:
    """Ids of axis-aligned boxes (n, 2, 3) overlapping the query (2, 3).

    Closed-box test: touching counts as overlapping.
    """
    lo, hi = boxes[:, 0, :], boxes[:, 1, :]
    hit = np.all((lo <= query[1]) & (hi >= query[0]), axis=1)
    return set(np.flatnonzero(hit).tolist())


def segment_in_tet_fraction(tet: np.ndarray, segment: np.ndarray,
                            n_samples: int = 1_000_000) -> float:
    """Sampled estimate of the in-tet length of a segment.

    Classifies midpoint samples along the segment against the tetrahedron
    with exact barycentric coordinates. The in-out boundary can land at
    most one sample wrong per crossing, so the error is bounded by
    (number of crossings) x (segment length) / n_samples.
    """
    t = (np.arange(n_samples) + 0.5) / n_samples
    pts = segment[0] + t[:, None] * (segment[1] - segment[0])
    mat = np.column_stack([tet[1] - tet[0], tet[2] - tet[0], tet[3] - tet[0]])
    bary = np.linalg.solve(mat, (pts - tet[0]).T).T
    inside = (bary >= 0).all(axis=1) & (bary.sum(axis=1) <= 1.0)
    length = float(np.linalg.norm(segment[1] - segment[0]))
    return length * float(inside.mean())

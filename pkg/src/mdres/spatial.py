"""Spatial search and the electrode-to-bulk intersection map.

An alternating digital tree (ADT) indexes bulk-cell bounding boxes with
6-component keys (box min and max per axis); the splitting coordinate
cycles with tree depth. The tree only proposes candidates: actual overlap
is decided by exact tetrahedron-segment clipping, which also yields the
intersection lengths that weight the electrode coupling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCell, UnmappedElectrode
from .mdgrid import SubdomainMesh

__all__ = [
    "Adt",
    "ElectrodeSegmentMap",
    "adt_build",
    "adt_candidates",
    "tet_segment_clip",
    "map_electrode",
]

# relative epsilon for half-space tests, scaled by cell diameter
_CLIP_EPS = 1e-12


@dataclass
class Adt:
    """Binary tree over 6D keys (bounding box min/max per axis).

    Node arrays: ``keys[i]`` is the 6-key of the item resident at node i,
    ``ids[i]`` its cell id, ``left``/``right`` child node indices (-1 for
    none). ``lo``/``hi`` bound all keys; the splitting coordinate at depth
    d is d mod 6 and the region halves at each level.
    """

    keys: np.ndarray
    ids: np.ndarray
    left: np.ndarray
    right: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @property
    def n_items(self) -> int:
        return len(self.ids)


def _as_boxes(obj) -> np.ndarray:
    """(n, 6) [xmin ymin zmin xmax ymax zmax] from a mesh or an array."""
    if isinstance(obj, SubdomainMesh):
        pts = obj.nodes[obj.cells]                        # (n, dim+1, 3)
        return np.concatenate([pts.min(axis=1), pts.max(axis=1)], axis=1)
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 3 and arr.shape[1:] == (2, 3):
        return arr.reshape(len(arr), 6)
    if arr.ndim == 2 and arr.shape[1] == 6:
        return arr
    raise ValueError("boxes must be (n, 6), (n, 2, 3), or a SubdomainMesh")


def adt_build(cells) -> Adt:
    """Build the tree over cell bounding boxes.

    ``cells`` is a SubdomainMesh (3D cell boxes are derived) or an array of
    boxes. Items are inserted in id order: the first item reaching an empty
    node stays there, later ones branch on whether their key coordinate
    lies in the lower or upper half of the node's shrinking region.
    The construction below processes whole tree levels at once, which
    reproduces sequential insertion order exactly.
    """
    boxes = _as_boxes(cells)
    n = len(boxes)
    if n == 0:
        z = np.zeros(6)
        return Adt(keys=np.zeros((0, 6)), ids=np.zeros(0, dtype=np.int64),
                   left=np.zeros(0, dtype=np.int64), right=np.zeros(0, dtype=np.int64),
                   lo=z, hi=z + 1.0)
    if not np.all(np.isfinite(boxes)):
        raise ValueError("bounding boxes must be finite")

    lo = boxes.min(axis=0)
    hi = boxes.max(axis=0)
    ids = np.arange(n, dtype=np.int64)

    keys_out = np.empty((n, 6))
    ids_out = np.empty(n, dtype=np.int64)
    left = -np.ones(n, dtype=np.int64)
    right = -np.ones(n, dtype=np.int64)

    # per-item current region bounds in the splitting coordinate cycle
    reg_lo = np.tile(lo, (n, 1))
    reg_hi = np.tile(hi, (n, 1))
    item_node = np.zeros(n, dtype=np.int64)     # provisional node label
    alive = ids.copy()

    # map provisional labels to final array slots in allocation order
    node_slot = {0: 0}
    next_slot = 1
    depth = 0
    while alive.size:
        c = depth % 6
        labels = item_node[alive]
        order = np.argsort(labels, kind="stable")       # stable keeps id order
        alive = alive[order]
        labels = labels[order]
        first = np.ones(len(alive), dtype=bool)
        first[1:] = labels[1:] != labels[:-1]

        res = alive[first]
        for it, lab in zip(res, labels[first]):
            slot = node_slot[int(lab)]
            keys_out[slot] = boxes[it]
            ids_out[slot] = it
        resident_slot = {int(lab): node_slot[int(lab)] for lab in labels[first]}

        rest = alive[~first]
        if rest.size == 0:
            break
        lab_rest = labels[~first]
        mid = 0.5 * (reg_lo[rest, c] + reg_hi[rest, c])
        go_right = boxes[rest, c] >= mid
        reg_lo[rest[go_right], c] = mid[go_right]
        reg_hi[rest[~go_right], c] = mid[~go_right]
        child_lab = 2 * lab_rest + 1 + go_right

        # allocate child slots in first-visit order and wire parent links
        for lab, parent_lab, gr in zip(child_lab, lab_rest, go_right):
            lab = int(lab)
            if lab not in node_slot:
                node_slot[lab] = next_slot
                p = resident_slot[int(parent_lab)]
                if gr:
                    right[p] = next_slot
                else:
                    left[p] = next_slot
                next_slot += 1
        item_node[rest] = child_lab
        alive = rest
        depth += 1

    return Adt(keys=keys_out, ids=ids_out, left=left, right=right, lo=lo, hi=hi)


def adt_candidates(adt: Adt, box) -> np.ndarray:
    """Ids of all stored cells whose bounding box intersects ``box``
    ((2,3), (6,) or (lo, hi) pair) -- exactly the brute-force overlap set.

    The tree is walked with region pruning; visited keys are then filtered
    by the exact 6D overlap test, so the result has no false positives.
    """
    if adt.n_items == 0:
        return np.zeros(0, dtype=np.int64)
    b = np.asarray(box, dtype=float).reshape(6)
    qlo, qhi = b[:3], b[3:]
    if np.any(qlo > qhi):
        qlo, qhi = np.minimum(qlo, qhi), np.maximum(qlo, qhi)
    # a stored key k matches iff k.min <= q.max (coords 0..2)
    # and k.max >= q.min (coords 3..5)
    want_lo = np.concatenate([adt.lo[:3], qlo])
    want_hi = np.concatenate([qhi, adt.hi[3:]])

    hits = []
    stack = [(0, adt.lo.copy(), adt.hi.copy(), 0)]
    keys, left, right = adt.keys, adt.left, adt.right
    while stack:
        node, rlo, rhi, depth = stack.pop()
        k = keys[node]
        if np.all(k >= want_lo) and np.all(k <= want_hi):
            hits.append(adt.ids[node])
        c = depth % 6
        mid = 0.5 * (rlo[c] + rhi[c])
        if left[node] >= 0 and want_lo[c] <= mid:
            nlo = rlo.copy(); nhi = rhi.copy(); nhi[c] = mid
            stack.append((left[node], nlo, nhi, depth + 1))
        if right[node] >= 0 and want_hi[c] >= mid:
            nlo = rlo.copy(); nhi = rhi.copy(); nlo[c] = mid
            stack.append((right[node], nlo, nhi, depth + 1))
    return np.array(sorted(hits), dtype=np.int64)


# ---------------------------------------------------------------------------
# exact clipping


def _tet_halfspaces(tet: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Outward unit normals and reference points of the 4 faces; raises
    DegenerateCell on (near-)zero volume."""
    tet = np.asarray(tet, dtype=float).reshape(4, 3)
    diam = max(np.linalg.norm(tet[i] - tet[j]) for i in range(4) for j in range(i + 1, 4))
    vol6 = np.dot(np.cross(tet[1] - tet[0], tet[2] - tet[0]), tet[3] - tet[0])
    if diam <= 0.0 or abs(vol6) <= 6e-12 * diam ** 3:
        raise DegenerateCell(-1, "tetrahedron with zero volume")
    center = tet.mean(axis=0)
    faces = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
    normals = np.empty((4, 3))
    points = np.empty((4, 3))
    for k, (i, j, l) in enumerate(faces):
        nrm = np.cross(tet[j] - tet[i], tet[l] - tet[i])
        nrm /= np.linalg.norm(nrm)
        if np.dot(nrm, center - tet[i]) > 0:
            nrm = -nrm
        normals[k] = nrm
        points[k] = tet[i]
    return normals, points, diam


def _clip_interval(normals: np.ndarray, points: np.ndarray, diam: float,
                   p0: np.ndarray, p1: np.ndarray) -> tuple[float, float] | None:
    """Parameter interval of p0 + t (p1 - p0), t in [0, 1], inside the tet."""
    d = p1 - p0
    eps = _CLIP_EPS * diam
    t0, t1 = 0.0, 1.0
    for k in range(4):
        a = float(np.dot(normals[k], p0 - points[k]))       # signed distance at t=0
        b = float(np.dot(normals[k], d))
        if abs(b) <= eps:
            if a > eps:
                return None
            continue
        t_star = (eps - a) / b
        if b > 0:
            t1 = min(t1, t_star)
        else:
            t0 = max(t0, t_star)
        if t0 >= t1:
            return None
    return (t0, t1) if t1 > t0 else None


def tet_segment_clip(tet, segment) -> float:
    """Length of segment ∩ closed tetrahedron, by clipping the parametric
    segment against the 4 face half-spaces."""
    normals, points, diam = _tet_halfspaces(tet)
    seg = np.asarray(segment, dtype=float).reshape(2, 3)
    span = _clip_interval(normals, points, diam, seg[0], seg[1])
    if span is None:
        return 0.0
    return (span[1] - span[0]) * float(np.linalg.norm(seg[1] - seg[0]))


# ---------------------------------------------------------------------------
# electrode map


@dataclass
class ElectrodeSegmentMap:
    """Intersection map of one electrode: entries (1D cell id, bulk cell id,
    length in m) partitioning the polyline; total_length is the full
    polyline arclength."""

    entries: list[tuple[int, int, float]] = field(default_factory=list)
    total_length: float = 0.0

    def by_segment(self, n_segments: int) -> list[list[tuple[int, float]]]:
        """Per-1D-cell list of (bulk cell, length) pairs."""
        out: list[list[tuple[int, float]]] = [[] for _ in range(n_segments)]
        for seg, cell, ln in self.entries:
            out[seg].append((cell, ln))
        return out

    def bulk_cells(self) -> np.ndarray:
        return np.unique([e[1] for e in self.entries]).astype(np.int64)


def map_electrode(polyline, bulk: SubdomainMesh, adt: Adt | None = None
                  ) -> ElectrodeSegmentMap:
    """Partition an electrode polyline among the bulk cells it crosses.

    ``polyline`` is a 1D SubdomainMesh (entries then refer to its cell ids)
    or an (n, 3) point array (entries refer to consecutive segments).
    Candidate cells come from the tree; each candidate is clipped exactly
    and the segment is partitioned at all clip endpoints, assigning every
    elementary piece to the lowest covering cell id so nothing is counted
    twice. A residual length above 1e-10 relative raises UnmappedElectrode.
    """
    if isinstance(polyline, SubdomainMesh):
        if polyline.dim != 1:
            raise ValueError("polyline mesh must be 1D")
        segs = polyline.nodes[polyline.cells]             # (n, 2, 3)
    else:
        pts = np.asarray(polyline, dtype=float).reshape(-1, 3)
        if len(pts) < 2:
            raise ValueError("polyline needs at least two points")
        segs = np.stack([pts[:-1], pts[1:]], axis=1)
    if adt is None:
        adt = adt_build(bulk)
    if bulk.cell_diameters is None:
        from .mdgrid import compute_geometry
        compute_geometry(bulk)

    entries: list[tuple[int, int, float]] = []
    total = 0.0
    covered = 0.0
    pts_cache: dict[int, tuple[np.ndarray, np.ndarray, float]] = {}
    for sid, (p0, p1) in enumerate(segs):
        seg_len = float(np.linalg.norm(p1 - p0))
        total += seg_len
        if seg_len == 0.0:
            continue
        pad = 1e-9 * max(seg_len, 1.0)
        qlo = np.minimum(p0, p1) - pad
        qhi = np.maximum(p0, p1) + pad
        cand = adt_candidates(adt, np.concatenate([qlo, qhi]))

        spans: list[tuple[float, float, int]] = []
        for cell in cand:
            hs = pts_cache.get(int(cell))
            if hs is None:
                hs = _tet_halfspaces(bulk.nodes[bulk.cells[cell]])
                pts_cache[int(cell)] = hs
            span = _clip_interval(hs[0], hs[1], hs[2], p0, p1)
            if span is not None and span[1] - span[0] > 1e-12:
                spans.append((span[0], span[1], int(cell)))

        if not spans:
            continue
        cuts = sorted({0.0, 1.0, *(s[0] for s in spans), *(s[1] for s in spans)})
        acc: dict[int, float] = {}
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a <= 1e-12:
                continue
            m = 0.5 * (a + b)
            owner = -1
            for t0, t1, cell in spans:
                if t0 - 1e-12 <= m <= t1 + 1e-12 and (owner < 0 or cell < owner):
                    owner = cell
            if owner >= 0:
                acc[owner] = acc.get(owner, 0.0) + (b - a) * seg_len
        for cell in sorted(acc):
            entries.append((sid, cell, acc[cell]))
            covered += acc[cell]

    residual = total - covered
    if residual > 1e-10 * max(total, 1e-30):
        raise UnmappedElectrode(residual)
    return ElectrodeSegmentMap(entries=entries, total_length=total)

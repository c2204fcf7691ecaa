"""Gauged solution of the pure-Neumann mixed-dimensional system.

The assembled operator has the constant potential in its nullspace, so a
gauge is required: "pin" replaces one row by the identity, solves, and
shifts the result to a measure-weighted zero average over all potential
dofs; "null-average" solves the bordered system with that average as an
explicit constraint. Both agree on potential differences to solver
accuracy.

Linear solves are symmetrically equilibrated first (the coupled system
mixes conductances from ~1e-10 S liner contacts to ~1e3 S electrode
segments). Small systems go to a sparse direct factorization; large ones
to ILU-preconditioned GMRES with direct factorization as the fallback;
every path ends with an iterative-refinement loop and a hard residual
check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import IncompatibleSource, SolveFailure

__all__ = [
    "DofLayout",
    "LinearSystem",
    "Solution",
    "BalanceReport",
    "solve_gauged",
    "check_balance",
]

# systems this small factor directly; bigger ones go iterative because
# complete 3D fill grows superlinearly (a narrow-stencil factorization
# at 75k dofs already costs ~2 GB)
_DIRECT_LIMIT = 20_000
_DIRECT_NNZ = 200_000
_WIDE_DIRECT_NNZ = 2_500_000
# acceptable backward error for a finished solve
_RES_LIMIT = 1e-10


@dataclass
class DofLayout:
    """Ordered named blocks of the global dof vector."""

    names: list[str]
    sizes: np.ndarray

    def __post_init__(self):
        self.sizes = np.asarray(self.sizes, dtype=np.int64).reshape(-1)
        if len(self.names) != len(self.sizes):
            raise ValueError("layout names and sizes differ in length")
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def n_total(self) -> int:
        return int(self.offsets[-1])

    def offset(self, name: str) -> int:
        return int(self.offsets[self.names.index(name)])

    def size(self, name: str) -> int:
        return int(self.sizes[self.names.index(name)])

    def slice(self, name: str) -> slice:
        k = self.names.index(name)
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def split(self, vector: np.ndarray) -> dict[str, np.ndarray]:
        return {name: vector[self.slice(name)] for name in self.names}


@dataclass
class LinearSystem:
    """Square sparse system with its dof layout and gauge weights
    (cell measures for potential dofs, 0 for mortar dofs).

    blocks: (name, coupling block) pairs recorded by global assembly so
    exchange currents can be reconstructed from a solution.

    precond: optional same-shape, same-physics sparse surrogate (in
    practice the two-point twin of a multi-point discretization) whose
    factorization preconditions the Krylov solve; it never affects what
    the solution converges to, only how fast.
    """

    matrix: sps.csr_matrix
    rhs: np.ndarray
    layout: DofLayout
    weights: np.ndarray
    blocks: list = field(default_factory=list)
    precond: sps.spmatrix | None = None

    def __post_init__(self):
        n = self.layout.n_total
        if self.matrix.shape != (n, n):
            raise ValueError("matrix shape does not match the dof layout")
        if len(self.rhs) != n or len(self.weights) != n:
            raise ValueError("vector length does not match the dof layout")


@dataclass
class BalanceReport:
    """Conservation summary of one solve.

    subdomain_residual: max |balance defect| per subdomain, in A. The
    electrode entries sit on a higher rounding floor than bulk or liner
    ones because the rod conductance (~1e3 S against ~1e-3 S in the
    bulk) multiplies the potential there; u * |row| * |phi| is the
    attainable bound for those rows in double precision.
    """

    max_cell_residual: float
    rel_residual: float
    injected_in: float
    injected_out: float
    subdomain_residual: dict[str, float] = field(default_factory=dict)

    @property
    def net_injection(self) -> float:
        return self.injected_in + self.injected_out


@dataclass
class Solution:
    """Gauged potentials plus whatever reconstruction has been attached."""

    values: np.ndarray
    system: LinearSystem
    gauge: str
    rel_residual: float
    potentials: dict[str, np.ndarray] = field(default_factory=dict)
    exchange: dict[str, np.ndarray] = field(default_factory=dict)
    fluxes: dict[str, np.ndarray] = field(default_factory=dict)
    balance: BalanceReport | None = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[self.system.layout.slice(name)]


def _inf_norm(A) -> float:
    m = np.abs(A).sum(axis=1).max()
    return float(max(m, 1e-300))


def _backward_error(A, x: np.ndarray, b: np.ndarray, anorm: float) -> float:
    """Normwise backward error |Ax - b| / (|A| |x| + |b|).

    The plain b-relative residual is not attainable here: electrode rods
    contribute matrix entries several orders above the injection scale,
    so u * |A| * |x| alone exceeds 1e-12 * |b| in double precision.
    """
    r = np.linalg.norm(A @ x - b)
    return float(r / (anorm * np.linalg.norm(x) + np.linalg.norm(b) + 1e-300))


def _refine(A, x: np.ndarray, b: np.ndarray, apply_inv, anorm: float) -> np.ndarray:
    """Mixed-precision iterative refinement in the original frame.

    Residuals are evaluated in extended precision so the iteration
    contracts the forward error down to the double rounding floor, not
    just to kappa(A) * u. This is what makes eliminated and explicit
    mortar solves agree to ~1e-14 instead of ~kappa * 1e-16.
    """
    Ax = A.astype(np.longdouble)
    bx = b.astype(np.longdouble)
    prev = np.inf
    for _ in range(8):
        # a backward-stable solve already has a floor-level residual, so
        # the correction size, not the residual, drives the stops
        r = np.asarray(bx - Ax @ x.astype(np.longdouble), dtype=float)
        dx = apply_inv(r)
        ndx = np.linalg.norm(dx)
        if ndx > 0.5 * prev:          # stalled at the rounding floor
            break
        x = x + dx
        if ndx <= 1e-15 * np.linalg.norm(x):
            break
        prev = ndx
    return x


def _row_scale(A: sps.csr_matrix) -> np.ndarray:
    """Symmetric equilibration weights 1/sqrt of the row inf-norm."""
    rn = np.abs(A).max(axis=1).toarray().ravel()
    rn[rn == 0.0] = 1.0
    return 1.0 / np.sqrt(rn)


def _krylov(A, b: np.ndarray, M, anorm: float) -> np.ndarray:
    """Preconditioned Krylov solve stopped on the backward error.

    Runs restarted GMRES in bounded cycles first; scipy counts maxiter
    in restart cycles and its own stopping test is useless here, so the
    backward error is checked between cycles (one matvec) and iteration
    stops at the rounding floor. Plain restarts stagnate on the
    nonsymmetric systems that explicit mortar blocks produce, so a
    stalled GMRES hands its iterate to GCROT(m,k), whose recycled
    subspace survives restarts, as a slower but sturdier second stage.
    """
    x = None
    for _ in range(8):
        x, _ = spla.gmres(A, b, x0=x, M=M, rtol=1e-14, atol=0.0,
                          restart=100, maxiter=1)
        if _backward_error(A, x, b, anorm) <= 1e-12:
            return x
    for _ in range(6):
        x, _ = spla.gcrotmk(A, b, x0=x, M=M, rtol=1e-14, atol=0.0,
                            m=60, k=30, maxiter=10)
        if _backward_error(A, x, b, anorm) <= 1e-12:
            break
    return x


def _linear_solve(A: sps.csr_matrix, b: np.ndarray,
                  P: sps.spmatrix | None = None) -> np.ndarray:
    """Escalating inner solve gated on the backward error.

    Narrow systems factor directly (SuperLU equilibrates and pivots on
    its own) and get mixed-precision refinement, which is nearly free
    with a factorization at hand. Wide-stencil systems would blow the
    memory budget in a direct factorization, so they run preconditioned
    GMRES instead, and refinement is skipped because repeating the
    Krylov solve per pass buys nothing measurable.

    The Krylov iteration runs on the symmetrically equilibrated system.
    Sheet and rod coefficients put fourteen orders of magnitude between
    row scales, and on such systems the plain normwise backward error
    can sit below any sane gate while equations at physical scale are
    still badly violated (inflated |x| buys slack for every row).
    Equilibrated rows are all O(1), so the same normwise gate becomes
    meaningful for each equation individually. Factorizations stay in
    the original frame (SuperLU's incomplete LU hits exact zero pivots
    on the equilibrated matrix) and the preconditioner is wrapped with
    the scaling instead.

    When a same-shape narrow surrogate P is supplied, its incomplete
    factorization is tried first: it factors in seconds where the wide
    operator takes minutes, and it captures the same physics, so GMRES
    converges in a few hundred iterations.
    """
    n = A.shape[0]
    anorm = _inf_norm(A)
    Ac = A.tocsc()
    small = n <= _DIRECT_LIMIT or A.nnz <= _DIRECT_NNZ
    if small:
        attempts = ["direct"]
    else:
        attempts = (["surrogate"] if P is not None else []) + ["ilu"]
        if A.nnz <= _WIDE_DIRECT_NNZ:
            # complete fill on a wide stencil grows far beyond nnz; past
            # this point splu exhausts memory, so fail honestly instead
            attempts += ["ilu-strong", "direct"]
        d = _row_scale(A)
        S = sps.diags(d)
        As = (S @ A @ S).tocsr()
        bs = d * b
        anorm_s = _inf_norm(As)
    last_exc: Exception | None = None
    x = None
    for kind in attempts:
        try:
            if kind == "direct":
                lu = spla.splu(Ac)
                x = _refine(A, lu.solve(b), b, lu.solve, anorm)
            else:
                target = P.tocsc() if kind == "surrogate" else Ac
                drop, fill = (1e-5, 12) if kind == "ilu-strong" else (1e-3, 5)
                ilu = spla.spilu(target, drop_tol=drop, fill_factor=fill)
                M = spla.LinearOperator((n, n),
                                        lambda r: ilu.solve(r / d) / d)
                y = _krylov(As, bs, M, anorm_s)
                x = None if y is None else d * y
                if x is not None and \
                        _backward_error(As, y, bs, anorm_s) <= _RES_LIMIT:
                    return x
                continue
        except (RuntimeError, MemoryError, ValueError) as exc:
            last_exc = exc
            continue
        if x is not None and _backward_error(A, x, b, anorm) <= _RES_LIMIT:
            return x
    res = _backward_error(A, x, b, anorm) if x is not None else np.inf
    raise SolveFailure("linear solver did not reach the residual target"
                       + (f" ({last_exc})" if last_exc else ""), residual=res)


def solve_gauged(system: LinearSystem, gauge: str = "pin") -> Solution:
    """Solve the singular Neumann system under the chosen gauge.

    The rhs must be compatible (zero sum within 1e-12 of its 1-norm).
    Returns the solution with the measure-weighted average of the
    potential dofs equal to zero; mortar dofs (zero weight) are not
    shifted.
    """
    if gauge not in ("pin", "null-average"):
        raise ValueError(f"unknown gauge {gauge!r}")
    b = system.rhs
    total = abs(b.sum())
    scale = np.abs(b).sum()
    if scale > 0 and total > 1e-12 * scale:
        raise IncompatibleSource(
            f"rhs sums to {b.sum():.3e} against a 1-norm of {scale:.3e}")

    w = system.weights
    n = system.layout.n_total
    small = n <= _DIRECT_LIMIT or system.matrix.nnz <= _DIRECT_NNZ
    if gauge == "null-average" and small:
        # multiplier formulation: append the weighted-average constraint
        # as a border row/column; only for directly factorable systems,
        # because the dense border wrecks both incomplete and complete
        # factorizations at scale (for bigger systems the same gauge is
        # imposed by the closing projection after a pinned solve)
        wn = w / max(np.abs(w).max(), 1e-300)
        Ab = sps.bmat([[system.matrix, wn[:, None]], [wn[None, :], None]],
                      format="csr")
        x = _linear_solve(Ab, np.append(b, 0.0))[:n]
    else:
        def pinned(mat):
            A = mat.tocsr(copy=True)
            A.data[A.indptr[0]:A.indptr[1]] = 0.0
            return (A + sps.csr_matrix(([1.0], ([0], [0])), shape=A.shape)
                    ).tocsr()
        b = b.copy()
        b[0] = 0.0
        P = None if system.precond is None else pinned(system.precond)
        x = _linear_solve(pinned(system.matrix), b, P)
    # shift potential dofs to measure-weighted zero average
    pot = w > 0
    c = (w[pot] @ x[pot]) / w[pot].sum()
    x = x.copy()
    x[pot] -= c

    M = system.matrix.tocsr()
    rel = _backward_error(M, x, system.rhs, _inf_norm(M))
    if not np.all(np.isfinite(x)):
        raise SolveFailure("non-finite entries in the solution", residual=rel)
    if rel > _RES_LIMIT:
        raise SolveFailure("gauged solve missed the residual target", residual=rel)
    sol = Solution(values=x, system=system, gauge=gauge, rel_residual=rel)
    sol.potentials = {name: x[system.layout.slice(name)]
                      for name in system.layout.names
                      if not name.startswith("mortar")}
    return sol


def check_balance(solution: Solution, injections: dict[str, float] | list[float]
                  ) -> BalanceReport:
    """Per-dof conservation residuals and the global injection balance.

    Residuals are evaluated in extended precision so they measure the
    defect of the stored solution, not matvec rounding noise.
    """
    sysm = solution.system
    r = np.asarray(sysm.matrix.astype(np.longdouble)
                   @ solution.values.astype(np.longdouble)
                   - sysm.rhs.astype(np.longdouble), dtype=float)
    pot = sysm.weights > 0
    if isinstance(injections, dict):
        vals = np.array(list(injections.values()), dtype=float)
    else:
        vals = np.asarray(injections, dtype=float)
    per_sub = {}
    for name in sysm.layout.names:
        sl = sysm.layout.slice(name)
        sub = r[sl][pot[sl]]
        per_sub[name] = float(np.abs(sub).max()) if len(sub) else 0.0
    rep = BalanceReport(
        max_cell_residual=float(np.abs(r[pot]).max()) if pot.any() else 0.0,
        rel_residual=solution.rel_residual,
        injected_in=float(vals[vals > 0].sum()) if len(vals) else 0.0,
        injected_out=float(vals[vals < 0].sum()) if len(vals) else 0.0,
        subdomain_residual=per_sub,
    )
    solution.balance = rep
    return rep

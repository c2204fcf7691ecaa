"""Exception and warning types shared across the package."""

from __future__ import annotations


class MdresError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGeometry(MdresError):
    """Geometric input that cannot describe a valid mesh or domain."""


class ParseError(MdresError):
    """Malformed mesh file. Carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateCell(MdresError):
    """Cell with (numerically) zero measure."""

    def __init__(self, cell: int, detail: str = ""):
        self.cell = cell
        msg = f"degenerate cell {cell}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NonConformingLiner(MdresError):
    """Liner panel that does not coincide with a mesh lattice plane."""


class UnmappedElectrode(MdresError):
    """Part of an electrode polyline lies outside every bulk cell."""

    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"electrode segment of length {residual:.6e} m not covered by any cell")


class SingularInteractionRegion(MdresError):
    """Singular local system in the multi-point flux assembly."""

    def __init__(self, vertex: int):
        self.vertex = vertex
        super().__init__(f"singular interaction region at vertex {vertex}")


class UnknownBoundaryTag(MdresError):
    """Boundary flux specified on a tag no mesh face carries."""


class NonpositiveDenominator(MdresError):
    """Peaceman coefficient undefined: ln(r_e/r) + S <= 0."""


class BrokenMortar(MdresError):
    """Mortar cell without a matching bulk face."""

    def __init__(self, face: int):
        self.face = face
        super().__init__(f"no mortar pairing for face {face}")


class AssemblyMismatch(MdresError):
    """Blocks assembled on inconsistent grids."""


class IncompatibleSource(MdresError):
    """Right-hand side of a pure-Neumann system does not sum to zero."""


class SolveFailure(MdresError):
    """Linear solver breakdown."""

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        if residual is not None:
            message += f" (residual {residual:.3e})"
        super().__init__(message)


class InvalidSurvey(MdresError):
    """Electrode array that does not fit the domain."""


class ConfigError(MdresError):
    """Invalid scenario configuration; messages name the offending field."""


class EmptyLiner(UserWarning):
    """Liner panel that selects no faces."""


class IllConditionedFace(UserWarning):
    """Face with non-positive two-point half-transmissibility."""

"""Exception hierarchy shared across the package."""


class StrainRelaxError(Exception):
    """Base class for all package errors."""


class StructuralError(StrainRelaxError):
    """Malformed input structure: mismatched spaces, bad indices, bad edges."""


class ValidationError(StrainRelaxError):
    """Input data fails a documented precondition (maps to CLI exit code 2)."""


class SolverError(StrainRelaxError):
    """The SDP solver could not produce a usable answer (CLI exit code 3)."""


class RankDeficientEqualityError(SolverError):
    """Equality constraints are not full row rank after deduplication."""


class UnsupportedEnergyError(ValidationError):
    """An operation was asked for an energy model outside its certified scope."""

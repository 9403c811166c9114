"""Exception hierarchy shared by every module.

The CLI maps these onto its exit codes, so the classes carry the code they
should produce.
"""


class MultitaperError(Exception):
    exit_code = 1


class ContractError(MultitaperError, ValueError):
    """Caller broke a documented precondition (shapes, norms, orthogonality)."""

    exit_code = 2


class DomainError(ContractError):
    """Inputs are well-formed but describe an empty or degenerate domain."""


class ResourceError(ContractError):
    """Requested computation exceeds a configured size cap."""


class NumericError(MultitaperError, ArithmeticError):
    """An iterative or factorisation step failed numerically."""

    exit_code = 3


class GridFileError(MultitaperError, OSError):
    """Malformed grid file or sidecar."""

    exit_code = 4

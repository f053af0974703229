"""
Exception hierarchy. Every error carries the CLI exit code it maps to.
"""


class DispersiveError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = 1

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


class SpecValidationError(DispersiveError):
    """A problem spec failed validation; carries the violation records."""

    def __init__(self, violations):
        self.violations = list(violations)
        detail = "; ".join(f"{v.field}: {v.message}" for v in self.violations)
        super().__init__(f"invalid problem spec: {detail}")

    def to_dict(self) -> dict:
        payload = super().to_dict()
        payload["violations"] = [v.model_dump() for v in self.violations]
        return payload


class UnreducedRawForms(DispersiveError):
    """Raw linear boundary forms must be reduced before this operation."""


class SingularReduction(DispersiveError):
    """The raw forms do not determine the high boundary derivatives."""


class InsufficientStencil(DispersiveError):
    """Too few stencil offsets for the requested derivative order."""


class GridTooSmall(DispersiveError):
    """The grid cannot hold the stencils required by (l, p)."""


class EmptyNullspace(DispersiveError):
    """No nonzero polynomial of the requested degree meets the boundary conditions."""


class ZeroForcing(DispersiveError):
    """The forcing vanishes identically, so estimate ratios are undefined."""


class InadmissibleCoefficients(DispersiveError):
    """Boundary coefficients violate the sufficient admissibility conditions."""

    exit_code = 2


class NumericallySingular(DispersiveError):
    """The discrete system is singular to working precision."""

    exit_code = 3


class UsageError(DispersiveError):
    """Malformed command line."""

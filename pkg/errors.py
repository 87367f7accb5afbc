"""Exception hierarchy shared by every module.

Each error carries the CLI exit code it maps to and an optional diagnostics
dict that ends up in the JSON error record:

  2  usage / configuration problems (InputError, CapabilityError)
  3  numerical problems (DomainError, NumericalFailure, NotFoundError, ResourceError)
"""

from typing import Any


class SRDistError(RuntimeError):
    exit_code: int = 3

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics: dict[str, Any] = diagnostics or {}


class InputError(SRDistError, ValueError):
    """Malformed input: wrong dimensions, bad weights, unknown keys."""
    exit_code = 2


class CapabilityError(SRDistError):
    """The requested operation is not available for this model kind."""
    exit_code = 2


class DomainError(SRDistError, ValueError):
    """Input lies outside the mathematical domain (beyond cut time, singular matrix)."""


class NumericalFailure(SRDistError):
    pass


class NotFoundError(SRDistError):
    """No convergent boundary-value solution."""


class ResourceError(SRDistError):
    pass

"""Exception types raised across the package."""


class ErgoMourreError(Exception):
    """Base class for all package errors."""


class InvalidArgument(ErgoMourreError, ValueError):
    """Bad shapes, sizes, windows or parameters."""


class NumericFailure(ErgoMourreError, ArithmeticError):
    """An iterative or adaptive numerical procedure did not reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DomainError(ErgoMourreError, ValueError):
    """Input outside the domain of the requested function (e.g. log of a nonpositive poly)."""


class ResonanceError(ErgoMourreError, ArithmeticError):
    """Some frequency k.y is (numerically) an integer, so averages do not decay."""


class DegenerateSpec(ErgoMourreError, ValueError):
    """The active character is trivial on the homomorphism part (N^T m = 0)."""


class EmptySelection(ErgoMourreError, ValueError):
    """A spectral window selected no frequencies."""

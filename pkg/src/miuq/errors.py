"""Exception types shared across the package."""


class MiuqError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(MiuqError, ValueError):
    """An input violates a documented precondition or invariant."""


class DomainError(MiuqError, ValueError):
    """A matrix function was applied outside its domain (e.g. log of a
    non-positive-definite matrix)."""


class PdViolationError(ValidationError):
    """A matrix that must be symmetric positive definite is not."""


class NumericalError(MiuqError, RuntimeError):
    """A numerical routine failed (e.g. an eigensolver did not converge)."""


class ConvergenceError(NumericalError):
    """An iterative algorithm hit its iteration limit.

    Carries the last residual so callers can decide whether the partial
    result would have been acceptable.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class FormatError(MiuqError):
    """A file does not match the expected on-disk format."""


class ChecksumError(FormatError):
    """Stored content checksum does not match the file contents."""


class TensorSizeError(FormatError):
    """Tensor file byte count disagrees with the manifest dimensions."""


class FormatVersionError(FormatError):
    """File declares a format version this code does not understand."""

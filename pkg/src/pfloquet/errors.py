"""Exception types raised across the package."""

from __future__ import annotations


class PfloquetError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(PfloquetError, ValueError):
    """Invalid driving, system or experiment configuration."""


class DomainError(PfloquetError, ValueError):
    """Argument outside the domain of an operation (negative time, bad grid alignment)."""


class ContractError(PfloquetError, ValueError):
    """Precondition of an operation is violated by its inputs."""


class EllipticityError(ContractError):
    """Diffusion coefficient fell below the ellipticity floor."""


class DegeneratePairingError(PfloquetError, ValueError):
    """The pairing of a Floquet vector with its dual is not positive."""


class DegenerateSolutionError(PfloquetError, ArithmeticError):
    """A reference solution vanished where it is used as a denominator."""


class NumericalError(PfloquetError, ArithmeticError):
    """Non-finite intermediate value."""


class UnsupportedOperation(PfloquetError, NotImplementedError):
    """The propagator does not provide the requested operation."""


class ConvergenceError(PfloquetError, RuntimeError):
    """An iteration did not reach its tolerance.

    ``residual_trace`` holds the residual after every iteration.
    """

    def __init__(self, message: str, residual_trace=()):
        super().__init__(message)
        self.residual_trace = list(residual_trace)


class OracleFailure(PfloquetError, RuntimeError):
    """A reference solver could not produce an answer."""

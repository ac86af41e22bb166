"""Exception hierarchy shared by all modules."""


class VCGMPCError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(VCGMPCError, ValueError):
    """A physical or numerical parameter violates its invariants."""


class ConfigError(VCGMPCError, ValueError):
    """Scenario configuration does not conform to the key schema."""


class NumericalError(VCGMPCError, ArithmeticError):
    """A linear-algebra step was too ill-conditioned to trust."""


class DivergenceError(NumericalError):
    """An iteration failed to converge within its iteration cap."""


class InstabilityError(NumericalError):
    """A closed-loop state exceeded the blow-up guard."""


class DegeneracyError(NumericalError):
    """A matrix that must be positive definite is singular."""


class NoCertificateError(VCGMPCError):
    """No efficiency certificate exists (gamma_T >= 1)."""


class CertificateFalsifiedError(VCGMPCError):
    """A sample violates the certified cost sandwich.

    The offending state is available as ``witness``.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class InadmissibleReportError(VCGMPCError, ValueError):
    """A reported type stream leaves the admissibility envelope."""

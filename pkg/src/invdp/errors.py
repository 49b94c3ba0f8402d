"""Exception hierarchy shared by the pipeline stages."""


class InvdpError(Exception):
    """Base class for all package errors."""


class DomainError(InvdpError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConvergenceError(InvdpError, RuntimeError):
    """An iterative routine stopped before meeting its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SingularInformationError(InvdpError, RuntimeError):
    """The information matrix of an estimator is singular."""


class InsufficientDataError(InvdpError, ValueError):
    """The sample does not contain enough variation to estimate a model."""


class SeparationError(InsufficientDataError):
    """A binary outcome is perfectly predicted by one regressor."""


class SpecError(InvdpError, ValueError):
    """A chain specification cannot be realised."""


class ConfigError(InvdpError, ValueError):
    """A run configuration failed validation."""

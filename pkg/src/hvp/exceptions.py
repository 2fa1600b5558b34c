"""Exception types raised across the package."""


class HvpError(Exception):
    """Base class for all package errors."""


class ValidationError(HvpError):
    """Input or configuration failed validation."""


class ConfigError(ValidationError):
    """A run configuration is malformed (unknown keys, bad JSON, bad types)."""


class NonStarShaped(ValidationError):
    pass


class InvalidParams(ValidationError):
    pass


class NoAdmissibleAlpha(InvalidParams):
    pass


class IncompatibleMesh(ValidationError):
    pass


class NumericalError(HvpError):
    """A numerical routine failed to meet its contract."""


class SolveFailure(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class Diverged(NumericalError):
    pass

"""Exception types shared across the package."""


class GencompError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(GencompError):
    """An argument violates an operation's preconditions."""


class EmptyVideoError(InvalidInputError):
    """A video with zero frames where at least one is required."""


class EmptyRegionError(InvalidInputError):
    """A metric region selects no pixels."""


class SpecViolationError(GencompError):
    """A scene description asks for something the renderer cannot honor."""


class ContractViolationError(GencompError):
    """An internal wiring contract was broken (e.g. overlapping position grids)."""


class ConfigError(GencompError):
    """Unrecognized or inconsistent configuration value."""


class NothingToInsertError(GencompError):
    """The retargeted insertion mask is empty on every frame."""


class NonFiniteLossError(GencompError):
    """Training hit a NaN/inf loss; message carries step and batch context."""

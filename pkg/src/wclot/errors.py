"""Exception taxonomy shared by the library and the CLI exit codes."""


class WclotError(Exception):
    """Base class for all wclot errors."""

    exit_code = 1


class InputDomainError(WclotError):
    """Inputs violate a documented precondition (bad file, bad shape, ...)."""

    exit_code = 1


class NumericalDegeneracyError(WclotError):
    """A computation degenerated numerically (e.g. kernel underflow)."""

    exit_code = 2


class CapacityError(WclotError):
    """The instance exceeds a hard size cap of an exact method."""

    exit_code = 3

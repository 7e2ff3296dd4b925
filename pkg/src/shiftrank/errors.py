"""Exception types shared across the package.

The CLI maps these onto exit codes: config/format problems are exit 1,
missing or unreadable artifacts are exit 2, internal invariant breaches
are exit 3.
"""


class ShiftrankError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ShiftrankError, ValueError):
    """A configuration value violates its documented invariant."""


class FormatError(ShiftrankError, ValueError):
    """A file does not conform to the VPRF/VPRG/manifest layout.

    Where possible the message names the byte offset of the offending
    field so a hex dump can be checked directly.
    """

    def __init__(self, message: str, *, path=None, offset: int | None = None):
        detail = message
        if offset is not None:
            detail += f" (byte offset {offset})"
        if path is not None:
            detail = f"{path}: {detail}"
        super().__init__(detail)
        self.path = path
        self.offset = offset


class ContractError(ShiftrankError, ValueError):
    """A caller violated an operation precondition."""


class LoadError(ShiftrankError):
    """A required artifact (feature file, descriptor entry) is missing."""


class InternalError(ShiftrankError):
    """An internal invariant was breached; indicates a bug, not bad input."""


class DescriptorDriftWarning(UserWarning):
    """A stored descriptor deviated from unit norm by more than 1e-4.

    The loader renormalizes such descriptors (up to the hard 1e-3
    rejection limit) and emits this warning so producers can be audited.
    """


class ShiftSpreadWarning(UserWarning):
    """A shift residual exceeded the image size during aggregate scoring.

    The squared complement is clamped at zero in that case; with
    in-bounds feature positions this only happens for extreme shift
    spreads.
    """

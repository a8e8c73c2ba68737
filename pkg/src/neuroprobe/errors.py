"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: usage errors exit 2,
format/digest errors exit 3, numeric failures exit 4.
"""


class NeuroprobeError(Exception):
    """Base class for all package errors."""


class ShapeError(NeuroprobeError, ValueError):
    """Tensor or weight dimensions disagree with the declared contract."""


class FormatError(NeuroprobeError, ValueError):
    """A binary file (GWF/GRT1/GLZ1/FTS1) is malformed.

    Carries the byte offset at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DigestMismatchError(NeuroprobeError, ValueError):
    """Two artifacts that must describe the same model carry different digests."""


class ContractError(NeuroprobeError, ValueError):
    """A caller-supplied hook or argument violated its stated contract."""


class NumericError(NeuroprobeError, ArithmeticError):
    """A numeric routine cannot proceed (non-PSD matrix, too few samples, ...)."""

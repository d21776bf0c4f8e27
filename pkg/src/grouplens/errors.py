"""Exception hierarchy shared across the toolkit.

Everything raised on purpose derives from GrouplensError so the CLI can
catch one type and exit 1 with a message.
"""


class GrouplensError(Exception):
    """Base class for all toolkit errors."""


class SpecError(GrouplensError):
    """A stimulus spec violates its invariants (separation, enums, ranges)."""


class LayoutError(GrouplensError):
    """A figure does not fit its cell or the canvas."""


class ShapeError(GrouplensError):
    """Array dimensions are inconsistent with the requested operation."""


class NumericError(GrouplensError):
    """Non-finite values where finite ones are required."""


class FormatError(GrouplensError):
    """A tensor file or manifest does not match the exchange format."""


class IntegrityError(GrouplensError):
    """A manifest references files that are missing or inconsistent."""


class ContractViolation(GrouplensError):
    """An operation was called outside its stated precondition."""

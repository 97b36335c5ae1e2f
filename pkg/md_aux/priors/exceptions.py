"""Error types raised by the numerical library.

Every error derives from ``MDAuxError``, which itself is a ``ValueError``, so
callers that only care about "bad input" can keep catching the builtin.
"""


class MDAuxError(ValueError):
    """Base class for all library errors."""


class DomainError(MDAuxError):
    """An argument lies outside the domain of a function (e.g. log-gamma at x <= 0)."""


class CapacityError(MDAuxError):
    """A request exceeds a configured capacity (e.g. the Stirling table cap)."""


class DimensionMismatch(MDAuxError):
    """Vectors or matrices that must agree in shape do not."""


class ConstraintViolation(MDAuxError):
    """A structural invariant is violated (column sums, m > n, bad partition)."""


class BudgetExceeded(MDAuxError):
    """An exhaustive enumeration would exceed its budget."""


class EmptyInput(MDAuxError):
    """An operation that needs at least one value received none."""

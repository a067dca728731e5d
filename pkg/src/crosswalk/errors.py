"""Exception taxonomy shared by all modules.

Errors are split by who is at fault: the caller (domain/contract/parse),
the machine (resource), the mathematics not having converged yet
(window exhaustion, kernel value not reached), or an internal check
tripping (degeneracy, consistency).
"""


class CrosswalkError(Exception):
    """Base class for all package errors."""


class DomainError(CrosswalkError):
    """Input outside the mathematical domain of the operation."""


class ContractError(CrosswalkError):
    """Input violates a stated precondition (e.g. a non-probability measure)."""


class ScenarioParseError(CrosswalkError):
    """Malformed scenario file or element/word string."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(message + (f" ({', '.join(loc)})" if loc else ""))


class ResourceError(CrosswalkError):
    """A configured cap (ball size, label count, horizon budget) was exceeded."""


class WindowExhaustedError(CrosswalkError):
    """An operation would shrink a certified window below radius zero."""


class NotYetReachedError(CrosswalkError):
    """A kernel denominator is still zero (or below floor) at this horizon."""


class SplitUndefinedError(CrosswalkError):
    """State/measure split requested but the distinguished part has mass zero."""


class DegenerateEigensplitError(CrosswalkError):
    """Central eigensplit failed to separate blocks after the retry budget."""


class ConsistencyError(CrosswalkError):
    """An internal invariant check failed, signalling bad input data."""

"""Exception types shared across the package."""


class StabcertError(Exception):
    """Base class for all package errors."""


class ParseError(StabcertError):
    """Syntax or name error while parsing an expression.

    Carries the byte offset of the offending token in ``offset``.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalDomainError(StabcertError):
    """Evaluation hit an invalid operation (division by zero, log of a
    non-positive number, overflow, ...).  NaN/Inf never escape evaluation."""

    def __init__(self, message: str, node=None, value=None):
        super().__init__(message)
        self.node = node
        self.value = value


class FixedPointError(StabcertError):
    """Fixed-point solving failed (no root found in the domain)."""


class MultipleRootsError(FixedPointError):
    """More than one interior fixed point when a unique one was expected.

    The located roots are available in ``roots``.
    """

    def __init__(self, message: str, roots):
        super().__init__(message)
        self.roots = list(roots)


class PreconditionError(StabcertError):
    """An operation's precondition failed (monotonicity profile, curve
    membership, residual cross-check, ...)."""


class NonConvergenceError(StabcertError):
    """An iterative solver exceeded its iteration cap."""

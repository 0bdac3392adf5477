"""Exception types shared across the package."""


class ChainError(ValueError):
    """Malformed chain, distribution or file contents."""


class BudgetExceeded(RuntimeError):
    """An enumeration or trajectory cap was hit; the instance is too large."""


class InvariantViolation(RuntimeError):
    """An exact identity that must hold did not; carries a witness."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness

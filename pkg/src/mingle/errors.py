"""Exception hierarchy shared across the package.

Two families map onto the CLI exit codes: ``ContractViolation`` (bad inputs,
exit code 2) and ``NumericalFailure`` (the math gave up, exit code 3).
"""


class ContractViolation(ValueError):
    """An input violates a documented precondition or invariant."""


class NumericalFailure(RuntimeError):
    """A computation failed for numerical reasons (not a caller bug)."""


class DegenerateGeometryError(NumericalFailure):
    """Multilateration geometry is rank-deficient or too ill-conditioned."""


class DivergenceError(NumericalFailure):
    """Training produced non-finite losses in every repetition."""

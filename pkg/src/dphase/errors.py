"""Exception types carrying a machine-readable report."""


class SolverError(RuntimeError):
    """An iteration failed; ``report`` carries the diagnostics."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DiagnosticError(ValueError):
    """A diagnostic could not be evaluated (precondition or data problem)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class GammaConditionError(DiagnosticError):
    """The point does not see both signs in some ball down to grid scale."""


class DegeneratePointError(DiagnosticError):
    """The positive phase vanishes near the point, so no normalization exists."""

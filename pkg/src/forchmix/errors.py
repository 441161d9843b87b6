"""Exception types raised across the package."""


class ContractError(ValueError):
    """A caller violated a precondition (shape, mesh identity, parameter range)."""


class DomainError(ValueError):
    """Non-finite or otherwise inadmissible numerical input."""


class ConditioningError(RuntimeError):
    """The linearized system is singular to working precision."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NonConvergenceError(RuntimeError):
    """An iterative solve hit its iteration budget.

    ``report`` carries the residual history so no partial answer is lost.
    """

    def __init__(self, message, report=None, state=None):
        super().__init__(message)
        self.report = report
        self.state = state


class StagnationError(NonConvergenceError):
    """Line search and the Picard fallback both failed to reduce the residual."""


class ContinuationError(NonConvergenceError):
    """The regularization schedule ran out before successive stages agreed."""

    def __init__(self, message, report=None, stage_solutions=None):
        super().__init__(message, report=report)
        self.stage_solutions = stage_solutions or []


class IngestionError(ValueError):
    """A run configuration could not be parsed or violates a model assumption."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OracleError(RuntimeError):
    """A test-side reference computation failed (not a product failure)."""

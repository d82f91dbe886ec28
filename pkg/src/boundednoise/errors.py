class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class InfeasibleError(ValueError):
    """The requested configuration cannot be certified or planned at all."""


class NumericError(RuntimeError):
    """A quadrature or root-finding routine failed to converge."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class BudgetExhausted(RuntimeError):
    """An adaptive session was asked more queries than it was planned for."""

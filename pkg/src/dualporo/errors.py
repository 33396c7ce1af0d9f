"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the admissible range of an operation."""


class ResolutionError(ValueError):
    """A grid is too coarse to resolve the requested geometry."""


class SolverError(RuntimeError):
    """An iterative or Newton solver failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    """Invalid experiment configuration; collects every violation found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))

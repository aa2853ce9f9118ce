"""Exception types shared across the solver modules."""


class ConfigError(Exception):
    """Raised on malformed or inconsistent scenario configuration.

    Carries the 1-based line number of the offending entry when one exists.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SolverError(RuntimeError):
    """Base class for numerical-solver failures."""


class SingularSystemError(SolverError):
    """Linear system singular or too ill-conditioned to trust.

    Typically signals dark-state degeneracy or vanishing dissipation.
    """

    def __init__(self, message, condition=None):
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)
        self.condition = condition


class ResonanceError(SolverError):
    """Frequency-domain solve hit a resonance (shifted generator singular)."""


class ConvergenceError(SolverError):
    """Iterative solve failed to converge within its configured budget.

    ``trace`` holds the per-iteration convergence record, e.g. a list of
    ``(control_parameter, relative_change)`` pairs.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace else []


class ValidationFailure(Exception):
    """One or more validation checks failed; carries the report."""

    def __init__(self, report):
        failed = [c["name"] for c in report.get("checks", []) if not c["passed"]]
        super().__init__("validation failed: " + ", ".join(failed))
        self.report = report

"""Exception types shared across the package."""


class NegativeCurvatureError(ValueError):
    """Curvature pair has s'y <= 0, so no positive definite secant metric exists."""


class DivergenceError(RuntimeError):
    """Objective exceeded the divergence guard during a solver run."""


class BracketError(RuntimeError):
    """Root bracket could not be established within the doubling budget."""


class ConvergenceError(RuntimeError):
    """Iterative subroutine hit its iteration cap before reaching tolerance."""


class EnumerationLimitError(ValueError):
    """Requested exact enumeration exceeds the support-size guard."""


class LibsvmFormatError(ValueError):
    """Malformed LIBSVM input; carries 1-based line and column of the offender."""

    def __init__(self, line: int, column: int, message: str):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ConfigError(ValueError):
    """Invalid experiment configuration."""

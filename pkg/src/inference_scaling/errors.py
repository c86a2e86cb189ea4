"""Exception hierarchy shared by the library and the CLI."""


class ISLError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ISLError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class InfeasibleError(DomainError):
    """A requested target cannot be reached (e.g. coverage at or above the ceiling)."""


class EstimationError(ISLError):
    """Not enough usable data to estimate a quantity."""


class ResourceGuardError(ISLError):
    """A request would exceed the configured memory or size guard."""


class ParseError(ISLError):
    """An input file does not follow its declared format.

    ``line`` is the 1-based physical line number of the first offending line,
    when known.
    """

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class NonConvergenceError(ISLError):
    """No optimizer start converged; ``result`` holds the best-effort fit."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result

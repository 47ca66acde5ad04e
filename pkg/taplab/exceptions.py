"""Error hierarchy shared by the numerical core, the services and the CLI."""

from collections.abc import Sequence


class TapLabError(Exception):
    """Base class for every error raised by taplab."""


class DomainError(TapLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class MeasureError(TapLabError, ValueError):
    """An atomic or prefix measure cannot be assembled."""


class BoundaryError(TapLabError, KeyError):
    """A time was requested that is not a stored layer boundary."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class GridError(TapLabError):
    """The spatial grid is too narrow for the requested computation."""

    def __init__(self, message: str, required_half_width: float | None = None):
        super().__init__(message)
        self.required_half_width = required_half_width


class DegeneracyError(TapLabError):
    """A covariance block is singular (vanishing discriminant)."""


class SubordinationError(TapLabError):
    """No admissible subordination root, or a query sits on a pole."""

    def __init__(self, message: str, profile: Sequence[tuple[float, float]] = ()):
        super().__init__(message)
        self.profile = list(profile)


class ConvergenceError(TapLabError):
    """An iterative solver failed after all fallbacks."""

    def __init__(self, message: str, trace: Sequence[float] = ()):
        super().__init__(message)
        self.trace = list(trace)


class FieldBudgetError(TapLabError, MemoryError):
    """A coupling tensor would exceed the configured entry budget."""


class ConfigError(TapLabError):
    """A run configuration is malformed."""

    def __init__(self, message: str, field_path: str = ""):
        super().__init__(message)
        self.field_path = field_path

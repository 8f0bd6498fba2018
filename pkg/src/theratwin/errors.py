"""Exception types shared across the package."""

from __future__ import annotations


class TheratwinError(Exception):
    """Base class for all package-specific errors."""


class DomainError(TheratwinError, ValueError):
    """An input violates a documented precondition or invariant.

    ``path`` optionally names the offending field (dotted path), used by the
    HTTP layer to report where validation failed.
    """

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class IntegrationError(TheratwinError, RuntimeError):
    """Numerical integration failed; ``time`` is the failing time in hours."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (at t={time:g} h)")
        self.time = time


class TailFitError(TheratwinError, RuntimeError):
    """Mono-exponential tail extrapolation could not be performed."""


class TrainingError(TheratwinError, RuntimeError):
    """Surrogate training diverged; ``iteration`` is the failing iteration."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class GradientError(TheratwinError, ArithmeticError):
    """Gradient requested at a point where the loss is not finite."""

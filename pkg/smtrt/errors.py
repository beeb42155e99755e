"""Exception hierarchy shared by the solver, the study harness and the CLI."""
from __future__ import annotations

from typing import List, Optional


class SmtrtError(Exception):
    """Base class for every error raised on purpose by smtrt."""


class ConfigurationError(SmtrtError, ValueError):
    """Bad run configuration, unusable output location or missing input file.

    ``errors`` holds one human-readable line per problem so the CLI can print
    an itemized list instead of a single message.
    """

    def __init__(self, message: str, errors: Optional[List[str]] = None):
        super().__init__(message)
        self.errors: List[str] = list(errors) if errors else [message]


class NumericalError(SmtrtError, RuntimeError):
    """Assembly or linear-algebra breakdown."""


class ConvergenceError(NumericalError):
    """An iteration ran out of its budget.

    ``report`` carries the partial TimeStepReport of the failing step when
    the failure happened inside a time step.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report

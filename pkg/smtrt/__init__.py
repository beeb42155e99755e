"""Slab multigroup Sn thermal radiative transfer with Second-Moment acceleration."""

from .bench import (
    ProblemSpec,
    compare_methods,
    convergence_study,
    equilibrium_spec,
    gray_slab_spec,
    larsen_spec,
    make_reference,
    marshak_spec,
)
from .driver import SolverConfig, TimeSchedule, advance_sm, advance_unaccelerated, run
from .errors import ConfigurationError, ConvergenceError, NumericalError, SmtrtError

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "NumericalError",
    "ProblemSpec",
    "SmtrtError",
    "SolverConfig",
    "TimeSchedule",
    "advance_sm",
    "advance_unaccelerated",
    "compare_methods",
    "convergence_study",
    "equilibrium_spec",
    "gray_slab_spec",
    "larsen_spec",
    "make_reference",
    "marshak_spec",
    "run",
]

"""Proximal incremental aggregated gradient (PIAG) solver with executable
linear-rate certificates under quadratic growth."""

from .delays import DelaySchedule, RecordedDelays
from .errors import (CapabilityError, DivergenceError, GenerationError, InputError,
                     InvalidCertificateError, ParameterError, PIAGError,
                     ScheduleViolationError, ValidationError)
from .model import (GroundTruth, ProblemInstance, Regularizer, SmoothComponent,
                    full_gradient, objective, prox_step)
from .rates import (certificate_for, check_lemma1, convergence_rate, envelope_check,
                    lyapunov, max_step_size, rate_result4)
from .solver import ConvergenceTrace, SolverState, fbs_iterate, piag_iterate, run

__version__ = "0.1.0"

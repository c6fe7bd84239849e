"""Transform-based solver for finite-state semi-Markov processes."""

from .distributions import Empirical, Exponential, WaitingTimeDistribution, Weibull
from .errors import (
    ModelValidationError,
    NumericalError,
    QuadratureError,
    SingularMatrixError,
    SmpError,
    UndefinedQuantityError,
    UnsupportedOperationError,
)
from .model import SmpModel, StateClassification, classify_states, holding_lt, kernel_lt, validate
from .modelfile import ModelFileError, parse_model
from .quantities import LimitMatrix, QuantityResult, SmpSolver
from .simulation import Estimate, TrajectoryRecord, estimate, simulate_trajectory
from .transform import EulerConfig, complex_linear_solve, euler_invert, euler_nodes, invert_matrix_function

__version__ = "0.1.0"

# Randomized verdict battery
from .battery import VerdictBattery

# Core components (for advanced users)
from .config import Settings
from .engine import Engine

# All exceptions
from .exceptions import (
    ConfigurationError,
    ContractionViolatedError,
    ConvergenceError,
    DimensionMismatchError,
    InvalidParameterError,
    NumericalError,
    ScheduleError,
    StabilizationError,
    SteeringError,
    VerdictDisagreementError,
    WeightsError,
)

# Most commonly used models (for type hints)
from .models import (
    ConcatenationReport,
    ControlSequence,
    CostWeights,
    CrossCheckReport,
    FeedbackLaw,
    HautusVerdict,
    HeatConfig,
    ImpulseSystem,
    NotStabilizable,
    ObservabilityPair,
    PeriodicSchedule,
    ResultRecord,
    RiccatiSolution,
    RunConfig,
    SteeringResult,
    TerminalWeight,
    Trajectory,
    WeakObsReport,
)

# Solver groups (for advanced users who want direct access)
from .solvers import DynamicsSolver, HeatAnalyzer, ObservabilityAnalyzer, RiccatiSolver

# Main stabilizer facade
from .stabilizer import Stabilizer

__version__ = "0.1.0"

__all__ = [
    # Main facade
    "Stabilizer",
    "VerdictBattery",
    # Core components
    "Engine",
    "Settings",
    # Exceptions
    "StabilizationError",
    "DimensionMismatchError",
    "InvalidParameterError",
    "ScheduleError",
    "WeightsError",
    "NumericalError",
    "ConvergenceError",
    "SteeringError",
    "ContractionViolatedError",
    "ConfigurationError",
    "VerdictDisagreementError",
    # Common models
    "PeriodicSchedule",
    "ImpulseSystem",
    "ControlSequence",
    "Trajectory",
    "FeedbackLaw",
    "CostWeights",
    "TerminalWeight",
    "RiccatiSolution",
    "NotStabilizable",
    "ObservabilityPair",
    "WeakObsReport",
    "SteeringResult",
    "ConcatenationReport",
    "HeatConfig",
    "HautusVerdict",
    "CrossCheckReport",
    "RunConfig",
    "ResultRecord",
    # Solver groups
    "DynamicsSolver",
    "RiccatiSolver",
    "ObservabilityAnalyzer",
    "HeatAnalyzer",
    # Version
    "__version__",
]

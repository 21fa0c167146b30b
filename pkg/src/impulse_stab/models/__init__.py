"""Data models for impulse stabilization."""

# Base models
from .base import ImpulseModel, Matrix, Vector, Verdict

# Battery models
from .battery import BatteryInstance, BatteryReport, InstanceVerdicts

# Heat models
from .heat import (
    CrossCheckReport,
    DecompositionResult,
    HautusVerdict,
    HeatConfig,
    ScheduleClassReport,
    SpanEqualityReport,
)

# Observability models
from .observability import (
    ConcatenationReport,
    HolderReport,
    ObservabilityPair,
    SteeringResult,
    WeakObsDecision,
    WeakObsReport,
)

# Riccati models
from .riccati import (
    AdmissibilityReport,
    CompletionOfSquaresReport,
    CostInterval,
    CostWeights,
    DynamicProgrammingReport,
    NotStabilizable,
    RiccatiSolution,
    TerminalWeight,
)

# Run models
from .run import ResultRecord, RunConfig

# System models
from .system import (
    ControlSequence,
    DecayFit,
    FeedbackLaw,
    ImpulseSystem,
    PeriodicSchedule,
    Trajectory,
    extend_schedule,
    nu,
)

__all__ = [
    # Base models
    "ImpulseModel",
    "Matrix",
    "Vector",
    "Verdict",
    # System models
    "PeriodicSchedule",
    "ImpulseSystem",
    "ControlSequence",
    "Trajectory",
    "FeedbackLaw",
    "DecayFit",
    "nu",
    "extend_schedule",
    # Riccati models
    "CostWeights",
    "TerminalWeight",
    "RiccatiSolution",
    "NotStabilizable",
    "CostInterval",
    "AdmissibilityReport",
    "CompletionOfSquaresReport",
    "DynamicProgrammingReport",
    # Observability models
    "ObservabilityPair",
    "WeakObsReport",
    "WeakObsDecision",
    "HolderReport",
    "SteeringResult",
    "ConcatenationReport",
    # Heat models
    "HeatConfig",
    "DecompositionResult",
    "HautusVerdict",
    "ScheduleClassReport",
    "SpanEqualityReport",
    "CrossCheckReport",
    # Battery models
    "BatteryInstance",
    "InstanceVerdicts",
    "BatteryReport",
    # Run models
    "RunConfig",
    "ResultRecord",
]

"""Solver groups sharing one numerics engine."""

from .base import BaseSolver
from .dynamics import DynamicsSolver
from .heat import HeatAnalyzer
from .observability import ObservabilityAnalyzer
from .riccati import RiccatiSolver

__all__ = [
    "BaseSolver",
    "DynamicsSolver",
    "RiccatiSolver",
    "ObservabilityAnalyzer",
    "HeatAnalyzer",
]

"""Main entry point bundling all solver groups."""

import logging

from .config import Settings
from .engine import Engine
from .models.riccati import CostWeights, NotStabilizable, RiccatiSolution
from .models.system import FeedbackLaw, ImpulseSystem
from .solvers.dynamics import DynamicsSolver
from .solvers.heat import HeatAnalyzer
from .solvers.observability import ObservabilityAnalyzer
from .solvers.riccati import RiccatiSolver

logger = logging.getLogger(__name__)


class Stabilizer:
    """Periodic impulse feedback synthesis and verification.

    Provides every operation through dedicated solver groups sharing one
    numerics engine.

    Example:
        ```python
        import numpy as np
        from impulse_stab import CostWeights, ImpulseSystem, PeriodicSchedule, Stabilizer

        stab = Stabilizer()
        system = ImpulseSystem(
            schedule=PeriodicSchedule(times=[1.0]), flows=[[[2.0]]], inputs=[[[1.0]]]
        )
        weights = CostWeights.identity(system)

        solution = stab.riccati.periodic_riccati_solve(system, weights)
        feedback = stab.riccati.synthesize_feedback(system, weights, solution)
        print(stab.dynamics.spectral_radius(stab.dynamics.monodromy(system, feedback)))
        ```
    """

    def __init__(self, settings: Settings | None = None, seed: int | None = None, **kwargs):
        """Initialize the stabilizer.

        Args:
            settings: Optional settings configuration
            seed: Seed for randomized searches (defaults to settings.SEED)
            **kwargs: Additional arguments passed to Settings
        """
        if settings is None:
            settings = Settings(**kwargs)

        self.engine = Engine(settings=settings, seed=seed)

        self.dynamics = DynamicsSolver(self.engine)
        self.riccati = RiccatiSolver(self.engine)
        self.observability = ObservabilityAnalyzer(self.engine)
        self.heat = HeatAnalyzer(self.engine)

        logger.debug("Stabilizer initialized")

    @property
    def settings(self) -> Settings:
        return self.engine.settings

    def synthesize(
        self, system: ImpulseSystem, weights: CostWeights | None = None, **kwargs
    ) -> tuple[RiccatiSolution | NotStabilizable, FeedbackLaw | None]:
        """Solve the periodic Riccati equation and derive the feedback.

        Returns:
            The solution (or NotStabilizable verdict) and the feedback, None when not stabilizable
        """
        weights = weights or CostWeights.identity(system)
        solution = self.riccati.periodic_riccati_solve(system, weights, **kwargs)
        if isinstance(solution, NotStabilizable):
            return solution, None
        return solution, self.riccati.synthesize_feedback(system, weights, solution)

    def __repr__(self) -> str:
        return f"Stabilizer(seed={self.engine.seed}, tol={self.settings.RICCATI_TOL:g})"

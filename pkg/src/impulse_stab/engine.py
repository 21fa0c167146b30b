"""Shared numerics core: settings, logging, rank decisions and SPD solves."""

import logging

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, svdvals

from .config import Settings
from .exceptions import NumericalError, WeightsError

logger = logging.getLogger(__name__)


class Engine:
    """Numerics core shared by every solver."""

    def __init__(self, settings: Settings | None = None, seed: int | None = None):
        """Initialize the engine.

        Args:
            settings: Optional settings configuration
            seed: Seed overriding settings.SEED for random starts
        """
        self.settings = settings or Settings()
        self.seed = self.settings.SEED if seed is None else seed

        # Setup logging
        logging.basicConfig(
            level=getattr(logging, self.settings.LOG_LEVEL),
            format=self.settings.LOG_FORMAT,
        )

    def rng(self, offset: int = 0) -> np.random.Generator:
        """Fresh generator seeded with seed + offset."""
        return np.random.default_rng(self.seed + offset)

    def rank(self, M: np.ndarray) -> int:
        """Numerical rank with threshold RANK_THRESHOLD * sigma_max."""
        if M.size == 0:
            return 0
        s = svdvals(M)
        if s[0] == 0.0:
            return 0
        return int(np.sum(s > self.settings.RANK_THRESHOLD * s[0]))

    def spd_solve(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Solve A X = B for symmetric positive definite A via Cholesky.

        Raises:
            WeightsError: If A is not positive definite
        """
        try:
            factor = cho_factor((A + A.T) / 2, lower=True, check_finite=True)
        except (LinAlgError, ValueError) as e:
            logger.error(f"Cholesky factorization failed: {e}")
            raise WeightsError(
                "R + B^T P B is not positive definite; weights are corrupted",
                details={"min_eigenvalue": float(np.linalg.eigvalsh((A + A.T) / 2).min())}
                if np.all(np.isfinite(A))
                else {},
            ) from e
        return cho_solve(factor, B)

    @staticmethod
    def opnorm(M: np.ndarray) -> float:
        """Spectral norm (0 for empty matrices)."""
        if M.size == 0:
            return 0.0
        return float(np.linalg.norm(M, 2))

    @staticmethod
    def symmetrize(M: np.ndarray) -> np.ndarray:
        return (M + M.T) / 2

    @staticmethod
    def check_finite(M: np.ndarray, what: str, **details) -> None:
        """Raise NumericalError if M holds NaN or inf."""
        if not np.all(np.isfinite(M)):
            logger.error(f"Non-finite values in {what}")
            raise NumericalError(f"NaN or overflow in {what}", details=details)

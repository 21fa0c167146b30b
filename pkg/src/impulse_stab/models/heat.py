"""Coupled heat system models."""

import logging
import math

import numpy as np
from pydantic import Field, field_validator, model_validator

from ..exceptions import DimensionMismatchError, ScheduleError
from .base import ImpulseModel, Matrix, Verdict

logger = logging.getLogger(__name__)


class HeatConfig(ImpulseModel):
    """Coupled heat equation x_t - Laplace x - S x = 0 on (0, pi) with interior impulses."""

    S: Matrix = Field(description="n x n coupling matrix")
    D: list[Matrix] = Field(description="Control matrices D_1..D_hbar (n x m)")
    omegas: list[tuple[float, float]] = Field(description="Control intervals (a_k, b_k)")
    N: int = Field(default=12, ge=1, description="Spectral truncation order")

    @field_validator("omegas")
    @classmethod
    def _check_intervals(cls, omegas: list[tuple[float, float]]) -> list[tuple[float, float]]:
        for k, (a, b) in enumerate(omegas, start=1):
            if not 0.0 <= a < b <= math.pi:
                raise ScheduleError(f"control interval omega_{k} = ({a}, {b}) not inside (0, pi)")
        return omegas

    @model_validator(mode="after")
    def _check_shapes(self) -> "HeatConfig":
        n = self.S.shape[0]
        if self.S.shape != (n, n):
            raise DimensionMismatchError("S", (n, n), self.S.shape)
        if not self.D:
            raise DimensionMismatchError("D", ">= 1 control matrix", 0)
        if len(self.D) != len(self.omegas):
            raise DimensionMismatchError("omegas", len(self.D), len(self.omegas))
        m = self.D[0].shape[1]
        for k, D in enumerate(self.D, start=1):
            if D.shape != (n, m):
                raise DimensionMismatchError(f"D_{k}", (n, m), D.shape)
        lo, hi = self.common_interval
        if lo >= hi:
            logger.warning(f"Control intervals have empty intersection ({lo:.4g}, {hi:.4g})")
        return self

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def m(self) -> int:
        return self.D[0].shape[1]

    @property
    def hbar(self) -> int:
        return len(self.D)

    @property
    def common_interval(self) -> tuple[float, float]:
        return max(a for a, _ in self.omegas), min(b for _, b in self.omegas)

    @property
    def Dcat(self) -> np.ndarray:
        """Concatenation (D_1, ..., D_hbar) of shape n x (m hbar)."""
        return np.hstack(self.D)

    def with_modes(self, N: int) -> "HeatConfig":
        return self.model_copy(update={"N": N})


class DecompositionResult(ImpulseModel):
    """Kalman controllability decomposition J^{-1} S J = [[S1, S2], [0, S3]]."""

    J: Matrix
    S1: Matrix
    S2: Matrix
    S3: Matrix
    Dtilde: Matrix
    n1: int = Field(description="Dimension of the controllable part")
    fully_controllable: bool = False


class HautusVerdict(Verdict):
    """Rank test rank(lambda I - S, D) = n over eigenvalues with Re >= lambda1."""

    stabilizable: bool
    witness: complex | None = Field(default=None, description="Failing eigenvalue lambda0")
    checked: list[complex] = Field(default_factory=list, description="Eigenvalues tested")


class ScheduleClassReport(ImpulseModel):
    """Window-count admissibility of a schedule for the pair (S, D)."""

    d_E: float = Field(description="Oscillation half-period (inf for real spectra)")
    q_EF: int
    admissible: bool
    min_window_count: int | None = Field(description="None when d_E is infinite")
    required: int = Field(description="hbar q + 2")


class SpanEqualityReport(ImpulseModel):
    equal: bool
    rank_sampled: int
    rank_kalman: int
    precondition_violated: bool = False


class CrossCheckReport(Verdict):
    """Agreement between the Hautus verdict and the truncated Riccati solve."""

    hautus: HautusVerdict
    riccati_converged: bool
    spectral_radius: float | None = None
    decay_rate: float | None = Field(default=None, description="Fitted mu of the closed loop")
    growth_rate: float | None = Field(default=None, description="Measured uncontrolled growth rate")
    expected_growth_rate: float | None = None
    agree: bool
    N: int

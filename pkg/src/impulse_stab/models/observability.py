"""Weak observability and steering models."""

from typing import Literal

import numpy as np
from pydantic import Field, computed_field

from .base import ImpulseModel, Matrix, Vector, Verdict
from .system import ControlSequence, Trajectory

ObservationRange = Literal["full", "exclusive"]
WeakObsMode = Literal["search", "sufficient", "feedback", "transfer"]


class ObservabilityPair(ImpulseModel):
    """Matrices of the weak observability inequality at horizon K.

    ||e^{A* t_K} phi|| = ||L^T phi|| and ||G phi||^2 is the observation sum
    over j in 1..K ("full") or 1..K-1 ("exclusive").
    """

    L: Matrix = Field(description="Flow product E_nu(K)...E_1")
    G: Matrix = Field(description="Stacked observation blocks, block_size rows each")
    K: int = Field(ge=1, description="Horizon index")
    block_size: int = Field(ge=1, description="Rows per observation block (input dim m)")
    observation_range: ObservationRange = "full"

    @property
    def state_dim(self) -> int:
        return self.L.shape[0]

    @computed_field
    @property
    def n_blocks(self) -> int:
        return self.G.shape[0] // self.block_size

    def block(self, j: int) -> np.ndarray:
        """Observation block G_j for 1-based j."""
        start = (j - 1) * self.block_size
        return self.G[start : start + self.block_size]

    def blocks(self) -> list[np.ndarray]:
        return [self.block(j) for j in range(1, self.n_blocks + 1)]


class WeakObsReport(Verdict):
    """Outcome of a weak observability constant computation."""

    sigma: float = Field(description="Contraction level sigma")
    K: int = Field(description="Horizon index of the inequality")
    C: float | None = Field(description="Constant, None when infeasible")
    feasible: bool
    mode: WeakObsMode
    observation_range: ObservationRange = "full"
    witness: Vector | None = Field(default=None, description="Unit maximizing direction")


class WeakObsDecision(ImpulseModel):
    """Decision of the inequality at a fixed (sigma, C)."""

    holds: bool
    worst: float = Field(description="max ||L^T phi|| - C ||G phi|| - sigma over unit phi")
    witness: Vector


class HolderReport(Verdict):
    """Estimate of the constant of the Hoelder-type observability inequality."""

    theta: float
    C: float | None
    feasible: bool
    witness: Vector | None = None


class SteeringResult(ImpulseModel):
    """Minimum-norm steering control of one block of K periods."""

    u: ControlSequence
    trajectory: Trajectory
    phi_star: Vector = Field(description="Minimizer of the steering functional (normalized state)")
    achieved_norm: float = Field(description="||x(t_{K hbar})||")
    control_norm: float
    epsilon: float
    sigma: float
    K: int = Field(description="Horizon in periods")
    C: float | None = Field(default=None, description="Observability constant used for the bound")


class ConcatenationReport(Verdict):
    """Block-concatenated stabilizing control and its decay certificate."""

    u: ControlSequence
    trajectory: Trajectory
    block_norms: list[float] = Field(description="||x_l(t_{K hbar}+)|| for l = 0, 1, ...")
    ratio: float = Field(description="Geometric block ratio from a log-linear fit")
    control_norm: float
    control_bound: float = Field(description="4 C^2 ||x0||^2 / (1 - r^2) bound on ||u||^2")
    partial_sums: list[float] = Field(description="Partial sums of ||x(t_j)||^2 at block ends")
    increments: list[float] = Field(description="Cauchy increments of the partial sums")
    certified: bool = Field(description="u belongs to the admissible set numerically")
